//! Mini-batch gradient descent with in-batch negatives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{aggregate_patches, loss_gradient, Dims, Mode, ProjectionModel, Sample, Target};
use crate::dataio::{Dataset, Label, Statement};
use crate::embeddings::EmbeddingTable;
use crate::linalg::normalized;
use crate::textsem::SceneText;
use crate::{Error, Parallelism, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub margin: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Partitioned heads match the whole statement instead of its action/reason parts.
    #[serde(default)]
    pub whole_statement_heads: bool,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Plain,
            margin: 0.2,
            lr: 0.01,
            epochs: 50,
            batch_size: 8,
            seed: 7,
            whole_statement_heads: false,
            parallelism: Parallelism::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::Config(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch size must be at least 2 for in-batch negatives".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ProjectionModel,
    /// Mean sample loss per epoch, measured before each batch update.
    pub loss_trace: Vec<f64>,
}

/// Unit-normalized mean word embedding of a token list.
pub fn statement_vector<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Option<Vec<f64>> {
    table.mean_embed(tokens).and_then(|m| normalized(&m))
}

/// Per-head statement targets: `[whole]`, or `[action, reason]` for partitioned
/// modes, where a part without embeddable tokens falls back to the whole statement.
pub fn head_targets(
    statement: &Statement,
    table: &EmbeddingTable,
    mode: Mode,
    whole_statement: bool,
) -> Option<Vec<Vec<f64>>> {
    let whole = statement_vector(&statement.tokens, table)?;
    if !mode.is_partitioned() {
        return Some(vec![whole]);
    }
    if whole_statement {
        return Some(vec![whole.clone(), whole]);
    }
    let action = statement_vector(&statement.action_tokens, table).unwrap_or_else(|| whole.clone());
    let reason = statement_vector(&statement.reason_tokens, table).unwrap_or(whole);
    Some(vec![action, reason])
}

/// Scene-text vector fed to fused heads: the unweighted mean of in-vocabulary scene tokens.
pub fn fusion_text_vector(scene: &SceneText, table: &EmbeddingTable) -> Option<Vec<f64>> {
    table.mean_embed(scene.tokens()).map(|v| v.into_inner())
}

struct Prepared {
    visual: Vec<f64>,
    text: Option<Vec<f64>>,
    positives: Vec<Vec<Vec<f64>>>,
}

fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    // a lone trailing sample has no negatives; fold it into the previous batch
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

/// Trains a projection model on `dataset`.
///
/// Each image contributes one positive statement per epoch (cycling through
/// its embeddable positives); its negatives are the chosen positives of the
/// other images in the same batch. Fully determined by `config.seed`.
pub fn train(
    dataset: &Dataset,
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mode = config.mode;
    let dims = Dims {
        object: dataset.dims.object,
        symbol: dataset.dims.symbol,
        word: table.dim(),
        emb: table.dim(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ProjectionModel::init(mode, dims, config.clone(), &mut rng)?;

    let mut prepared = Vec::new();
    for rec in &dataset.records {
        let positives: Vec<Vec<Vec<f64>>> = rec
            .statements
            .iter()
            .filter(|s| s.label == Label::Positive)
            .filter_map(|s| head_targets(s, table, mode, config.whole_statement_heads))
            .collect();
        if positives.is_empty() {
            log::debug!(
                "image {}: no embeddable positive statement, skipped",
                rec.id
            );
            continue;
        }
        let visual = aggregate_patches(&rec.features, dims.object, dims.symbol)?;
        let text = if mode.is_fused() {
            fusion_text_vector(&rec.scene, table)
        } else {
            None
        };
        prepared.push(Prepared {
            visual,
            text,
            positives,
        });
    }
    if prepared.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 trainable images, found {}",
            prepared.len()
        )));
    }

    let mut trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in batches(&order, config.batch_size) {
            let chosen: Vec<&Vec<Vec<f64>>> = batch
                .iter()
                .map(|&i| {
                    let p = &prepared[i].positives;
                    &p[epoch % p.len()]
                })
                .collect();
            let samples: Vec<Sample> = batch
                .iter()
                .enumerate()
                .map(|(bi, &i)| Sample {
                    visual: prepared[i].visual.clone(),
                    text: prepared[i].text.clone(),
                    targets: (0..mode.num_heads())
                        .map(|h| Target {
                            positive: chosen[bi][h].clone(),
                            negatives: chosen
                                .iter()
                                .enumerate()
                                .filter(|&(bj, _)| bj != bi)
                                .map(|(_, p)| p[h].clone())
                                .collect(),
                        })
                        .collect(),
                })
                .collect();
            let (loss, grad) = loss_gradient(&model, &samples, config.parallelism)?;
            loss_sum += loss * batch.len() as f64;
            for (m, g) in model.matrices_mut().zip(grad.matrices()) {
                m.add_scaled(-config.lr, g);
            }
        }
        let epoch_loss = loss_sum / prepared.len() as f64;
        if !epoch_loss.is_finite() || !model.matrices().all(|m| m.is_finite()) {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                loss: epoch_loss,
            });
        }
        log::debug!("epoch {} loss {epoch_loss}", epoch + 1);
        trace.push(epoch_loss);
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}
