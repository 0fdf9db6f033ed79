//! Statement-guided attention over scene-text tokens.
//!
//! Each in-vocabulary scene token `tᵢ` gets weight
//! `γᵢ = Σⱼ 1 / (1 + d(tᵢ, sⱼ))` over the in-vocabulary statement tokens `sⱼ`,
//! with `d` the cosine distance. The attended scene vector is the γ-weighted
//! average of the scene token embeddings.

use std::collections::HashSet;

use crate::embeddings::{cosine_distance_unchecked, EmbeddingTable, SemVector};
use crate::token;

/// OCR'd words of one image, in reading order, as recognized.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SceneText {
    tokens: Vec<String>,
}

impl SceneText {
    /// Empty strings are dropped.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SceneText {
            tokens: tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Normalized tokens for lexical matching.
    pub fn normalized(&self) -> Vec<String> {
        token::normalize_all(&self.tokens)
    }
}

/// Per-token attention weights, aligned with the in-vocabulary scene tokens.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttentionWeights {
    pub entries: Vec<(String, f64)>,
}

impl AttentionWeights {
    pub fn gammas(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, g)| *g)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Attention with an optional stopword list applied to the statement side.
#[derive(Debug, Clone, Default)]
pub struct TextAttention {
    stopwords: HashSet<String>,
}

impl TextAttention {
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        TextAttention {
            stopwords: words
                .into_iter()
                .map(|w| token::normalize(w.as_ref()))
                .collect(),
        }
    }

    fn statement_vectors<S: AsRef<str>>(
        &self,
        statement: &[S],
        table: &EmbeddingTable,
    ) -> Vec<SemVector> {
        statement
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| self.stopwords.is_empty() || !self.stopwords.contains(&token::normalize(t)))
            .filter_map(|t| table.lookup(t))
            .collect()
    }

    fn weighted<S: AsRef<str>>(
        &self,
        scene: &SceneText,
        statement: &[S],
        table: &EmbeddingTable,
    ) -> Vec<(String, SemVector, f64)> {
        let stmt = self.statement_vectors(statement, table);
        scene
            .tokens()
            .iter()
            .filter_map(|t| table.lookup(t).map(|v| (t, v)))
            .map(|(t, v)| {
                let gamma = stmt
                    .iter()
                    .map(|s| 1.0 / (1.0 + cosine_distance_unchecked(&v, s)))
                    .sum();
                (t.clone(), v, gamma)
            })
            .collect()
    }

    pub fn weights<S: AsRef<str>>(
        &self,
        scene: &SceneText,
        statement: &[S],
        table: &EmbeddingTable,
    ) -> AttentionWeights {
        AttentionWeights {
            entries: self
                .weighted(scene, statement, table)
                .into_iter()
                .map(|(t, _, g)| (t, g))
                .collect(),
        }
    }

    /// γ-weighted average of scene token vectors. Falls back to the plain mean
    /// when every γ is zero (empty statement), `None` without in-vocabulary scene tokens.
    pub fn attended<S: AsRef<str>>(
        &self,
        scene: &SceneText,
        statement: &[S],
        table: &EmbeddingTable,
    ) -> Option<SemVector> {
        let weighted = self.weighted(scene, statement, table);
        if weighted.is_empty() {
            return None;
        }
        let total: f64 = weighted.iter().map(|(_, _, g)| g).sum();
        let (total, uniform) = if total > 0.0 {
            (total, false)
        } else {
            (weighted.len() as f64, true)
        };
        let mut acc = vec![0.0; table.dim()];
        for (_, v, g) in &weighted {
            let w = if uniform { 1.0 } else { *g };
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += w * x;
            }
        }
        Some(SemVector::new(acc.into_iter().map(|a| a / total).collect()))
    }

    /// Cosine distance between the attended scene vector and the statement mean;
    /// 1.0 when either is unavailable.
    pub fn distance<S: AsRef<str>>(
        &self,
        scene: &SceneText,
        statement: &[S],
        table: &EmbeddingTable,
    ) -> f64 {
        let stmt: Vec<&str> = statement
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| self.stopwords.is_empty() || !self.stopwords.contains(&token::normalize(t)))
            .collect();
        match (self.attended(scene, &stmt, table), table.mean_embed(&stmt)) {
            (Some(t), Some(s)) => cosine_distance_unchecked(&t, &s),
            _ => 1.0,
        }
    }
}

pub fn attention_weights<S: AsRef<str>>(
    scene: &SceneText,
    statement: &[S],
    table: &EmbeddingTable,
) -> AttentionWeights {
    TextAttention::default().weights(scene, statement, table)
}

pub fn attended_text_embedding<S: AsRef<str>>(
    scene: &SceneText,
    statement: &[S],
    table: &EmbeddingTable,
) -> Option<SemVector> {
    TextAttention::default().attended(scene, statement, table)
}

pub fn text_semantic_distance<S: AsRef<str>>(
    scene: &SceneText,
    statement: &[S],
    table: &EmbeddingTable,
) -> f64 {
    TextAttention::default().distance(scene, statement, table)
}
