//! Top-1 accuracy and ranker agreement.

use std::collections::{BTreeMap, BTreeSet};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutcome {
    pub id: String,
    pub predicted: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub num_images: usize,
    pub num_correct: usize,
    pub accuracy: f64,
    pub per_image: Vec<ImageOutcome>,
    /// Images left out of the denominator because they have no positive statement.
    pub excluded: Vec<String>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        format!(
            "accuracy {:.4} ({}/{})",
            self.accuracy, self.num_correct, self.num_images
        )
    }
}

/// An image is correct when its top-ranked statement is one of its positives.
pub fn accuracy(
    predictions: &[(String, usize)],
    gold: &BTreeMap<String, BTreeSet<usize>>,
) -> Result<EvalReport> {
    let mut per_image = Vec::with_capacity(predictions.len());
    let mut excluded = Vec::new();
    for (id, top) in predictions {
        let positives = gold
            .get(id)
            .ok_or_else(|| Error::UnknownImage(id.clone()))?;
        if positives.is_empty() {
            excluded.push(id.clone());
            continue;
        }
        per_image.push(ImageOutcome {
            id: id.clone(),
            predicted: *top,
            correct: positives.contains(top),
        });
    }
    if per_image.is_empty() {
        return Err(Error::Contract(
            "no predicted image has a positive statement".into(),
        ));
    }
    let num_correct = per_image.iter().filter(|o| o.correct).count();
    let num_images = per_image.len();
    Ok(EvalReport {
        num_images,
        num_correct,
        accuracy: num_correct as f64 / num_images as f64,
        per_image,
        excluded,
    })
}

/// Fraction of images where both rankers pick the same top statement.
pub fn agreement(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "agreement over {} and {} images",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Contract("agreement over zero images".into()));
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}
