//! Final statement scoring and ranking.
//!
//! `score = α1·d(z, ŝ) + α2·d(t, s) + α3·d_lex(tʳ, sʳ)`, or with partitioned
//! heads `α1a·d(z_a, ŝ_a) + α1r·d(z_r, ŝ_r) + α2·d(t, s) + α3·d_lex`. Lower is
//! better; any component that cannot be computed contributes 1.0.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, ImageRecord, Statement};
use crate::embeddings::{cosine_distance_unchecked, EmbeddingTable};
use crate::lexical::TfIdfModel;
use crate::textsem::TextAttention;
use crate::vissem::{
    aggregate_patches, fusion_text_vector, head_targets, ImageEmbedding, ProjectionModel,
};
use crate::{Error, Parallelism, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingWeights {
    pub alpha1: f64,
    pub alpha1a: f64,
    pub alpha1r: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for RankingWeights {
    fn default() -> Self {
        RankingWeights {
            alpha1: 0.7,
            alpha1a: 0.5,
            alpha1r: 0.5,
            alpha2: 0.3,
            alpha3: 1.5,
        }
    }
}

impl RankingWeights {
    /// Same weight on the joint and both partitioned visual terms.
    pub fn uniform_visual(alpha1: f64, alpha2: f64, alpha3: f64) -> Self {
        RankingWeights {
            alpha1,
            alpha1a: alpha1,
            alpha1r: alpha1,
            alpha2,
            alpha3,
        }
    }

    /// Text scoring only (visual terms zeroed).
    pub fn text_only(self) -> Self {
        RankingWeights {
            alpha1: 0.0,
            alpha1a: 0.0,
            alpha1r: 0.0,
            ..self
        }
    }

    /// Visual semantics only.
    pub fn visual_only(self) -> Self {
        RankingWeights {
            alpha2: 0.0,
            alpha3: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha1,
            self.alpha1a,
            self.alpha1r,
            self.alpha2,
            self.alpha3,
        ];
        if all.iter().all(|a| a.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("ranking weights must be finite".into()))
        }
    }
}

/// `{0, 0.1, …, 1.5}³`, 4096 points; partitioned heads share α1.
pub fn default_grid() -> Vec<RankingWeights> {
    let steps: Vec<f64> = (0..=15).map(|i| i as f64 / 10.0).collect();
    let mut grid = Vec::with_capacity(steps.len().pow(3));
    for &a1 in &steps {
        for &a2 in &steps {
            for &a3 in &steps {
                grid.push(RankingWeights::uniform_visual(a1, a2, a3));
            }
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VisualDistance {
    Joint(f64),
    Parts { action: f64, reason: f64 },
}

/// The three distance channels for one image/statement pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components {
    pub visual: VisualDistance,
    pub text: f64,
    pub lexical: f64,
}

impl Components {
    pub fn score(&self, w: &RankingWeights) -> f64 {
        let visual = match self.visual {
            VisualDistance::Joint(d) => w.alpha1 * d,
            VisualDistance::Parts { action, reason } => w.alpha1a * action + w.alpha1r * reason,
        };
        visual + w.alpha2 * self.text + w.alpha3 * self.lexical
    }
}

/// Candidates ordered by ascending score, ties by ascending index.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub entries: Vec<(usize, f64)>,
}

impl RankedList {
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut entries: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        entries.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        RankedList { entries }
    }

    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn top(&self) -> Option<usize> {
        self.entries.first().map(|e| e.0)
    }
}

/// Index of the lowest score, earliest on ties.
fn argmin(scores: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    best.map(|b| b.0)
}

struct ImageContext {
    embedding: ImageEmbedding,
    scene_tokens: Vec<String>,
}

/// Scores statements against images with a trained model.
#[derive(Debug, Clone)]
pub struct Ranker<'a> {
    pub model: &'a ProjectionModel,
    pub tfidf: &'a TfIdfModel,
    pub table: &'a EmbeddingTable,
    pub weights: RankingWeights,
    pub attention: TextAttention,
    /// Compare partitioned heads against the whole statement rather than its parts.
    pub whole_statement_heads: bool,
}

impl<'a> Ranker<'a> {
    pub fn new(
        model: &'a ProjectionModel,
        tfidf: &'a TfIdfModel,
        table: &'a EmbeddingTable,
        weights: RankingWeights,
    ) -> Result<Self> {
        weights.validate()?;
        if table.dim() != model.dims.word {
            return Err(Error::dim(format!(
                "embedding table has dimension {}, model was trained with {}",
                table.dim(),
                model.dims.word
            )));
        }
        Ok(Ranker {
            model,
            tfidf,
            table,
            weights,
            attention: TextAttention::default(),
            whole_statement_heads: model.config.whole_statement_heads,
        })
    }

    fn context(&self, image: &ImageRecord) -> Result<ImageContext> {
        let d = &self.model.dims;
        let v = aggregate_patches(&image.features, d.object, d.symbol).map_err(|e| {
            Error::dim(format!(
                "image {}: {e} (model expects object dim {}, symbol dim {})",
                image.id, d.object, d.symbol
            ))
        })?;
        let text = if self.model.mode.is_fused() {
            fusion_text_vector(&image.scene, self.table)
        } else {
            None
        };
        Ok(ImageContext {
            embedding: self.model.embed(&v, text.as_deref())?,
            scene_tokens: image.scene.normalized(),
        })
    }

    fn components_in(&self, ctx: &ImageContext, image: &ImageRecord, s: &Statement) -> Components {
        let targets = head_targets(s, self.table, self.model.mode, self.whole_statement_heads);
        let visual = match (&ctx.embedding, targets) {
            (ImageEmbedding::Joint(z), Some(t)) => {
                VisualDistance::Joint(cosine_distance_unchecked(z, &t[0]))
            }
            (ImageEmbedding::Joint(_), None) => VisualDistance::Joint(1.0),
            (ImageEmbedding::Parts { action, reason }, Some(t)) => VisualDistance::Parts {
                action: cosine_distance_unchecked(action, &t[0]),
                reason: cosine_distance_unchecked(reason, &t[1]),
            },
            (ImageEmbedding::Parts { .. }, None) => VisualDistance::Parts {
                action: 1.0,
                reason: 1.0,
            },
        };
        Components {
            visual,
            text: self.attention.distance(&image.scene, &s.tokens, self.table),
            lexical: self.tfidf.distance(&ctx.scene_tokens, &s.tokens),
        }
    }

    pub fn components(&self, image: &ImageRecord, statement: &Statement) -> Result<Components> {
        let ctx = self.context(image)?;
        Ok(self.components_in(&ctx, image, statement))
    }

    /// Components for every candidate statement of `image`.
    pub fn all_components(&self, image: &ImageRecord) -> Result<Vec<Components>> {
        let ctx = self.context(image)?;
        Ok(image
            .statements
            .iter()
            .map(|s| self.components_in(&ctx, image, s))
            .collect())
    }

    pub fn score_statement(&self, image: &ImageRecord, statement: &Statement) -> Result<f64> {
        Ok(self.components(image, statement)?.score(&self.weights))
    }

    /// Ranks `image`'s own candidate statements.
    pub fn rank(&self, image: &ImageRecord) -> Result<RankedList> {
        if image.statements.is_empty() {
            return Err(Error::Contract(format!(
                "image {} has no candidate statements",
                image.id
            )));
        }
        let scores: Vec<f64> = self
            .all_components(image)?
            .iter()
            .map(|c| c.score(&self.weights))
            .collect();
        Ok(RankedList::from_scores(&scores))
    }

    /// Ranks an explicit list of candidates against `image`.
    pub fn rank_statements(
        &self,
        image: &ImageRecord,
        statements: &[Statement],
    ) -> Result<RankedList> {
        if statements.is_empty() {
            return Err(Error::Contract("empty candidate list".into()));
        }
        let ctx = self.context(image)?;
        let scores: Vec<f64> = statements
            .iter()
            .map(|s| self.components_in(&ctx, image, s).score(&self.weights))
            .collect();
        Ok(RankedList::from_scores(&scores))
    }

    /// Ranks every image; output order follows the dataset.
    pub fn rank_dataset(&self, dataset: &Dataset, par: Parallelism) -> Result<Vec<RankedList>> {
        par.try_map(&dataset.records, |r| self.rank(r))
    }

    /// Top-1 prediction per image, `(id, statement index)`.
    pub fn predict(&self, dataset: &Dataset, par: Parallelism) -> Result<Vec<(String, usize)>> {
        let lists = self.rank_dataset(dataset, par)?;
        Ok(dataset
            .records
            .iter()
            .zip(lists)
            .map(|(r, l)| (r.id.clone(), l.top().expect("non-empty ranking")))
            .collect())
    }
}

pub fn score_statement(
    ranker: &Ranker<'_>,
    image: &ImageRecord,
    statement: &Statement,
) -> Result<f64> {
    if ranker.model.mode.is_partitioned() {
        return Err(Error::Contract(format!(
            "model mode {} is partitioned; use score_statement_partitioned",
            ranker.model.mode
        )));
    }
    ranker.score_statement(image, statement)
}

pub fn score_statement_partitioned(
    ranker: &Ranker<'_>,
    image: &ImageRecord,
    statement: &Statement,
) -> Result<f64> {
    if !ranker.model.mode.is_partitioned() {
        return Err(Error::Contract(format!(
            "model mode {} is not partitioned",
            ranker.model.mode
        )));
    }
    ranker.score_statement(image, statement)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneResult {
    pub index: usize,
    pub weights: RankingWeights,
    pub accuracy: f64,
}

/// Top-1 accuracy of each grid point over precomputed components.
pub fn grid_accuracies(
    components: &[Vec<Components>],
    gold: &[BTreeSet<usize>],
    grid: &[RankingWeights],
    par: Parallelism,
) -> Vec<f64> {
    let scored: Vec<(&Vec<Components>, &BTreeSet<usize>)> = components
        .iter()
        .zip(gold)
        .filter(|(c, g)| !g.is_empty() && !c.is_empty())
        .collect();
    let n = scored.len().max(1) as f64;
    par.map(grid, |w| {
        let correct = scored
            .iter()
            .filter(|(c, g)| {
                argmin(c.iter().map(|x| x.score(w))).is_some_and(|top| g.contains(&top))
            })
            .count();
        correct as f64 / n
    })
}

/// Picks the grid point with the best top-1 accuracy on `validation`; the
/// earliest grid index wins ties. The ranker's own weights are ignored.
pub fn tune_alphas(
    ranker: &Ranker<'_>,
    validation: &Dataset,
    grid: &[RankingWeights],
    par: Parallelism,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty weight grid".into()));
    }
    let usable: Vec<&ImageRecord> = validation
        .records
        .iter()
        .filter(|r| !r.statements.is_empty() && !r.positive_indices().is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::Config(
            "no validation images with positive statements".into(),
        ));
    }
    let components = par.try_map(&usable, |r| ranker.all_components(r))?;
    let gold: Vec<BTreeSet<usize>> = usable.iter().map(|r| r.positive_indices()).collect();
    let acc = grid_accuracies(&components, &gold, grid, par);
    let mut best = 0;
    for (i, &a) in acc.iter().enumerate() {
        if a > acc[best] {
            best = i;
        }
    }
    Ok(TuneResult {
        index: best,
        weights: grid[best],
        accuracy: acc[best],
    })
}
