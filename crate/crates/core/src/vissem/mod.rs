//! Visual-semantic embedding: linear projections from aggregated patch features
//! (optionally fused with the scene-text vector) into the statement embedding
//! space, trained with a triplet hinge loss.

mod loss;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::SemVector;
use crate::linalg::{norm, Matrix};
use crate::{Error, Result};

pub use loss::{batch_loss, hinge_pattern, loss_gradient, triplet_loss, Gradient, Sample, Target};
pub use train::{
    fusion_text_vector, head_targets, statement_vector, train, TrainConfig, TrainOutcome,
};

/// Patch features from the object and symbolism detectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VisualFeatures {
    pub object_patches: Vec<Vec<f64>>,
    pub symbol_patches: Vec<Vec<f64>>,
}

/// Mean-pools each channel and concatenates `[objects ‖ symbols]`.
/// An empty channel contributes a zero block of its dimension.
pub fn aggregate_patches(
    features: &VisualFeatures,
    object_dim: usize,
    symbol_dim: usize,
) -> Result<Vec<f64>> {
    let mut out = mean_pool(&features.object_patches, object_dim, "object")?;
    out.extend(mean_pool(&features.symbol_patches, symbol_dim, "symbol")?);
    Ok(out)
}

fn mean_pool(patches: &[Vec<f64>], dim: usize, channel: &str) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; dim];
    for p in patches {
        if p.len() != dim {
            return Err(Error::dim(format!(
                "{channel} patch has length {}, expected {dim}",
                p.len()
            )));
        }
        for (a, x) in acc.iter_mut().zip(p) {
            *a += x;
        }
    }
    if !patches.is_empty() {
        let n = patches.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Plain,
    Fused,
    Partitioned,
    PartitionedFused,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Plain,
        Mode::Fused,
        Mode::Partitioned,
        Mode::PartitionedFused,
    ];

    pub fn is_fused(self) -> bool {
        matches!(self, Mode::Fused | Mode::PartitionedFused)
    }

    pub fn is_partitioned(self) -> bool {
        matches!(self, Mode::Partitioned | Mode::PartitionedFused)
    }

    pub fn num_heads(self) -> usize {
        if self.is_partitioned() {
            2
        } else {
            1
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Plain => "plain",
            Mode::Fused => "fused",
            Mode::Partitioned => "partitioned",
            Mode::PartitionedFused => "partitioned-fused",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Mode::Plain),
            "fused" => Ok(Mode::Fused),
            "partitioned" => Ok(Mode::Partitioned),
            "partitioned-fused" | "partitioned_fused" => Ok(Mode::PartitionedFused),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Feature and embedding dimensions a model was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub object: usize,
    pub symbol: usize,
    pub word: usize,
    pub emb: usize,
}

impl Dims {
    pub fn visual(&self) -> usize {
        self.object + self.symbol
    }
}

/// One projection pipeline. `fusion` is present in fused modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub visual: Matrix,
    pub fusion: Option<Matrix>,
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub fused_input: Option<Vec<f64>>,
    pub pre_norm: f64,
    pub z: Vec<f64>,
}

impl Head {
    fn init<R: Rng>(dims: &Dims, fused: bool, rng: &mut R) -> Self {
        let visual = glorot(dims.emb, dims.visual(), rng);
        let fusion = fused.then(|| glorot(dims.emb, dims.emb + dims.word, rng));
        Head { visual, fusion }
    }

    pub(crate) fn forward(&self, v: &[f64], text: Option<&[f64]>, word_dim: usize) -> Forward {
        let u = self.visual.mul_vec(v);
        let (y, fused_input) = match &self.fusion {
            Some(wc) => {
                let mut c = u;
                match text {
                    Some(t) => c.extend_from_slice(t),
                    None => c.extend(std::iter::repeat_n(0.0, word_dim)),
                }
                (wc.mul_vec(&c), Some(c))
            }
            None => (u, None),
        };
        let pre_norm = norm(&y);
        let z = if pre_norm > 0.0 {
            y.iter().map(|x| x / pre_norm).collect()
        } else {
            y
        };
        Forward {
            fused_input,
            pre_norm,
            z,
        }
    }

    fn matrices(&self) -> impl Iterator<Item = &Matrix> {
        std::iter::once(&self.visual).chain(self.fusion.as_ref())
    }

    fn matrices_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        std::iter::once(&mut self.visual).chain(self.fusion.as_mut())
    }
}

fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..=limit))
}

/// Image embedding produced by [`ProjectionModel::embed`].
#[derive(Debug, Clone, PartialEq)]
pub enum ImageEmbedding {
    Joint(SemVector),
    Parts {
        action: SemVector,
        reason: SemVector,
    },
}

/// Learned projections plus the configuration that produced them.
///
/// Heads are `[joint]` in unpartitioned modes and `[action, reason]` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub mode: Mode,
    pub dims: Dims,
    pub margin: f64,
    pub config: TrainConfig,
    pub heads: Vec<Head>,
}

impl ProjectionModel {
    /// Glorot-uniform initialization, seeded.
    pub fn init<R: Rng>(mode: Mode, dims: Dims, config: TrainConfig, rng: &mut R) -> Result<Self> {
        if dims.emb == 0 || dims.word == 0 {
            return Err(Error::Config(
                "embedding dimensions must be positive".into(),
            ));
        }
        if dims.visual() == 0 {
            return Err(Error::Config("no visual feature dimensions".into()));
        }
        let heads = (0..mode.num_heads())
            .map(|_| Head::init(&dims, mode.is_fused(), rng))
            .collect();
        Ok(ProjectionModel {
            mode,
            margin: config.margin,
            dims,
            config,
            heads,
        })
    }

    /// Builds a model from explicit matrices, checking shapes against `dims` and `mode`.
    pub fn from_heads(
        mode: Mode,
        dims: Dims,
        config: TrainConfig,
        heads: Vec<Head>,
    ) -> Result<Self> {
        let model = ProjectionModel {
            mode,
            dims,
            margin: config.margin,
            config,
            heads,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if self.heads.len() != self.mode.num_heads() {
            return Err(Error::dim(format!(
                "mode {} needs {} heads, found {}",
                self.mode,
                self.mode.num_heads(),
                self.heads.len()
            )));
        }
        for head in &self.heads {
            if head.visual.shape() != (d.emb, d.visual()) {
                return Err(Error::dim(format!(
                    "visual projection is {:?}, expected {:?}",
                    head.visual.shape(),
                    (d.emb, d.visual())
                )));
            }
            match (&head.fusion, self.mode.is_fused()) {
                (Some(wc), true) if wc.shape() == (d.emb, d.emb + d.word) => {}
                (None, false) => {}
                (Some(wc), true) => {
                    return Err(Error::dim(format!(
                        "fusion projection is {:?}, expected {:?}",
                        wc.shape(),
                        (d.emb, d.emb + d.word)
                    )))
                }
                _ => {
                    return Err(Error::dim(format!(
                        "fusion matrix presence does not match mode {}",
                        self.mode
                    )))
                }
            }
            if !head.matrices().all(Matrix::is_finite) {
                return Err(Error::Format("non-finite model parameter".into()));
            }
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::Config(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        Ok(())
    }

    pub fn matrices(&self) -> impl Iterator<Item = &Matrix> {
        self.heads.iter().flat_map(Head::matrices)
    }

    /// Trainable matrices in a fixed order matching [`Gradient::matrices`].
    pub fn matrices_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.heads.iter_mut().flat_map(Head::matrices_mut)
    }

    pub(crate) fn check_input(&self, v: &[f64], text: Option<&[f64]>) -> Result<()> {
        if v.len() != self.dims.visual() {
            return Err(Error::dim(format!(
                "visual vector has length {}, model expects {} (objects {} + symbols {})",
                v.len(),
                self.dims.visual(),
                self.dims.object,
                self.dims.symbol
            )));
        }
        if let Some(t) = text {
            if self.mode.is_fused() && t.len() != self.dims.word {
                return Err(Error::dim(format!(
                    "scene-text vector has length {}, model expects {}",
                    t.len(),
                    self.dims.word
                )));
            }
        }
        Ok(())
    }

    /// Projects an aggregated visual vector `v` (and the scene-text vector in
    /// fused modes) to unit-norm embedding(s). Missing text fuses as zeros.
    pub fn embed(&self, v: &[f64], text: Option<&[f64]>) -> Result<ImageEmbedding> {
        self.check_input(v, text)?;
        let mut zs = self
            .heads
            .iter()
            .map(|h| SemVector::new(h.forward(v, text, self.dims.word).z));
        Ok(if self.mode.is_partitioned() {
            let action = zs.next().expect("action head");
            let reason = zs.next().expect("reason head");
            ImageEmbedding::Parts { action, reason }
        } else {
            ImageEmbedding::Joint(zs.next().expect("joint head"))
        })
    }
}

pub fn embed_image(
    model: &ProjectionModel,
    v: &[f64],
    text: Option<&[f64]>,
) -> Result<ImageEmbedding> {
    model.embed(v, text)
}
