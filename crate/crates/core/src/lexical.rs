//! Tf-idf lexical distance between raw scene text and statement text.
//!
//! Weighting: raw term count times smoothed idf `ln((1+N)/(1+df)) + 1`, so
//! terms never seen during fitting still carry weight. Distances are cosine
//! distances of the resulting non-negative sparse vectors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::token;
use crate::{Error, Result};

/// Corpus statistics for idf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    num_docs: usize,
    doc_freq: BTreeMap<String, usize>,
}

/// Sparse non-negative term weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub entries: BTreeMap<String, f64>,
}

impl SparseVec {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        // Summing in key order makes the result independent of argument order.
        self.entries
            .iter()
            .filter_map(|(k, a)| other.entries.get(k).map(|b| a * b))
            .sum()
    }
}

impl TfIdfModel {
    /// Fits document frequencies. Each document is a token list; tokens are
    /// normalized before counting.
    pub fn fit<D, S>(documents: &[D]) -> Result<Self>
    where
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        if documents.is_empty() {
            return Err(Error::Config("tf-idf corpus has no documents".into()));
        }
        let mut doc_freq = BTreeMap::new();
        for doc in documents {
            let terms: BTreeSet<String> = token::normalize_all(doc.as_ref()).into_iter().collect();
            for term in terms {
                *doc_freq.entry(term).or_insert(0) += 1;
            }
        }
        Ok(TfIdfModel {
            num_docs: documents.len(),
            doc_freq,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq
            .get(&token::normalize(term))
            .copied()
            .unwrap_or(0)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.doc_freq.keys().map(String::as_str)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs as f64;
        let df = self.doc_freq(term) as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    pub fn vector<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVec {
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for t in token::normalize_all(tokens) {
            *tf.entry(t).or_insert(0) += 1;
        }
        SparseVec {
            entries: tf
                .into_iter()
                .map(|(term, count)| {
                    let w = count as f64 * self.idf(&term);
                    (term, w)
                })
                .collect(),
        }
    }

    /// Cosine distance of tf-idf vectors; 1.0 when either side is empty.
    pub fn distance<A: AsRef<str>, B: AsRef<str>>(&self, scene: &[A], statement: &[B]) -> f64 {
        sparse_cosine_distance(&self.vector(scene), &self.vector(statement))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.num_docs == 0 {
            return Err(Error::Format("tf-idf model with zero documents".into()));
        }
        if let Some((t, &df)) = self
            .doc_freq
            .iter()
            .find(|(_, &df)| df == 0 || df > self.num_docs)
        {
            return Err(Error::Format(format!(
                "document frequency {df} for {t:?} outside 1..={}",
                self.num_docs
            )));
        }
        Ok(())
    }
}

pub fn sparse_cosine_distance(a: &SparseVec, b: &SparseVec) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 || !denom.is_finite() {
        return 1.0;
    }
    (1.0 - a.dot(b) / denom).clamp(0.0, 1.0)
}

pub fn fit_tfidf<D, S>(documents: &[D]) -> Result<TfIdfModel>
where
    D: AsRef<[S]>,
    S: AsRef<str>,
{
    TfIdfModel::fit(documents)
}

pub fn tfidf_vector<S: AsRef<str>>(model: &TfIdfModel, tokens: &[S]) -> SparseVec {
    model.vector(tokens)
}

pub fn lexical_distance<A: AsRef<str>, B: AsRef<str>>(
    model: &TfIdfModel,
    scene: &[A],
    statement: &[B],
) -> f64 {
    model.distance(scene, statement)
}
