//! Triplet hinge loss and its exact gradient through the projection heads.

use super::{Forward, Head, ProjectionModel};
use crate::linalg::{distance, dot, Matrix};
use crate::{Error, Parallelism, Result};

/// Positive and negative statement embeddings for one head.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// One training image: aggregated visual vector, optional scene-text vector,
/// and one [`Target`] per model head.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub visual: Vec<f64>,
    pub text: Option<Vec<f64>>,
    pub targets: Vec<Target>,
}

/// Mean over negatives of `max(0, ‖z − s⁺‖ − ‖z − s⁻‖ + β)`.
pub fn triplet_loss(z: &[f64], positive: &[f64], negatives: &[Vec<f64>], beta: f64) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Contract(
            "triplet loss needs at least one negative".into(),
        ));
    }
    if positive.len() != z.len() || negatives.iter().any(|n| n.len() != z.len()) {
        return Err(Error::dim(format!(
            "triplet operands must all have length {}",
            z.len()
        )));
    }
    Ok(hinge_terms(z, positive, negatives, beta).sum::<f64>() / negatives.len() as f64)
}

fn hinge_arguments<'a>(
    z: &'a [f64],
    positive: &'a [f64],
    negatives: &'a [Vec<f64>],
    beta: f64,
) -> impl Iterator<Item = f64> + 'a {
    let d_pos = distance(z, positive);
    negatives.iter().map(move |n| d_pos - distance(z, n) + beta)
}

fn hinge_terms<'a>(
    z: &'a [f64],
    positive: &'a [f64],
    negatives: &'a [Vec<f64>],
    beta: f64,
) -> impl Iterator<Item = f64> + 'a {
    hinge_arguments(z, positive, negatives, beta).map(|a| a.max(0.0))
}

/// Gradient with the same head/matrix layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub heads: Vec<Head>,
}

impl Gradient {
    fn zeros_like(model: &ProjectionModel) -> Self {
        Gradient {
            heads: model
                .heads
                .iter()
                .map(|h| Head {
                    visual: Matrix::zeros(h.visual.rows(), h.visual.cols()),
                    fusion: h.fusion.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols())),
                })
                .collect(),
        }
    }

    pub fn matrices(&self) -> impl Iterator<Item = &Matrix> {
        self.heads.iter().flat_map(Head::matrices)
    }

    fn add_scaled(&mut self, scale: f64, other: &Gradient) {
        for (a, b) in self.heads.iter_mut().zip(&other.heads) {
            for (ma, mb) in a.matrices_mut().zip(b.matrices()) {
                ma.add_scaled(scale, mb);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.matrices().all(|m| m.max_abs() == 0.0)
    }
}

fn check_sample(model: &ProjectionModel, sample: &Sample) -> Result<()> {
    model.check_input(&sample.visual, sample.text.as_deref())?;
    if sample.targets.len() != model.heads.len() {
        return Err(Error::dim(format!(
            "sample has {} targets for {} heads",
            sample.targets.len(),
            model.heads.len()
        )));
    }
    let emb = model.dims.emb;
    for t in &sample.targets {
        if t.negatives.is_empty() {
            return Err(Error::Contract("sample without negatives".into()));
        }
        if t.positive.len() != emb || t.negatives.iter().any(|n| n.len() != emb) {
            return Err(Error::dim(format!(
                "statement embeddings must have length {emb} to match the projection output"
            )));
        }
    }
    Ok(())
}

/// dL/dz for one head's triplets; zero at hinge kinks and at coincident points.
fn loss_and_dz(z: &[f64], target: &Target, beta: f64) -> (f64, Vec<f64>) {
    let n = target.negatives.len() as f64;
    let d_pos = distance(z, &target.positive);
    let mut loss = 0.0;
    let mut gz = vec![0.0; z.len()];
    for neg in &target.negatives {
        let d_neg = distance(z, neg);
        let arg = d_pos - d_neg + beta;
        if arg <= 0.0 {
            continue;
        }
        loss += arg;
        if d_pos > 0.0 {
            for ((g, zi), pi) in gz.iter_mut().zip(z).zip(&target.positive) {
                *g += (zi - pi) / d_pos;
            }
        }
        if d_neg > 0.0 {
            for ((g, zi), ni) in gz.iter_mut().zip(z).zip(neg) {
                *g -= (zi - ni) / d_neg;
            }
        }
    }
    gz.iter_mut().for_each(|g| *g /= n);
    (loss / n, gz)
}

fn backward(head: &Head, fwd: &Forward, v: &[f64], gz: &[f64], grad: &mut Head) {
    if fwd.pre_norm == 0.0 {
        return;
    }
    // d(y/‖y‖)/dy = (I − z zᵀ)/‖y‖
    let zg = dot(&fwd.z, gz);
    let gy: Vec<f64> = gz
        .iter()
        .zip(&fwd.z)
        .map(|(g, z)| (g - z * zg) / fwd.pre_norm)
        .collect();
    match (&head.fusion, &fwd.fused_input, grad.fusion.as_mut()) {
        (Some(wc), Some(c), Some(gwc)) => {
            gwc.add_outer(1.0, &gy, c);
            let gc = wc.tr_mul_vec(&gy);
            grad.visual.add_outer(1.0, &gc[..head.visual.rows()], v);
        }
        _ => grad.visual.add_outer(1.0, &gy, v),
    }
}

fn sample_loss_and_gradient(model: &ProjectionModel, sample: &Sample) -> (f64, Gradient) {
    let mut grad = Gradient::zeros_like(model);
    let mut loss = 0.0;
    for ((head, target), g) in model.heads.iter().zip(&sample.targets).zip(&mut grad.heads) {
        let fwd = head.forward(&sample.visual, sample.text.as_deref(), model.dims.word);
        let (l, gz) = loss_and_dz(&fwd.z, target, model.margin);
        loss += l;
        backward(head, &fwd, &sample.visual, &gz, g);
    }
    (loss, grad)
}

/// Mean batch loss and its exact gradient. Partitioned heads add their losses.
///
/// Per-sample work may run in parallel; the reduction is in batch order, so the
/// result does not depend on `par`.
pub fn loss_gradient(
    model: &ProjectionModel,
    batch: &[Sample],
    par: Parallelism,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    for s in batch {
        check_sample(model, s)?;
    }
    let parts = par.map(batch, |s| sample_loss_and_gradient(model, s));
    let scale = 1.0 / batch.len() as f64;
    let mut total = Gradient::zeros_like(model);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_scaled(scale, g);
    }
    Ok((loss * scale, total))
}

/// Mean batch loss alone.
pub fn batch_loss(model: &ProjectionModel, batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut total = 0.0;
    for s in batch {
        check_sample(model, s)?;
        for (head, target) in model.heads.iter().zip(&s.targets) {
            let fwd = head.forward(&s.visual, s.text.as_deref(), model.dims.word);
            total += triplet_loss(&fwd.z, &target.positive, &target.negatives, model.margin)?;
        }
    }
    Ok(total / batch.len() as f64)
}

/// Which hinge terms are active, in (sample, head, negative) order.
/// Finite-difference checks compare patterns to detect kink crossings.
pub fn hinge_pattern(model: &ProjectionModel, batch: &[Sample]) -> Vec<bool> {
    let mut out = Vec::new();
    for s in batch {
        for (head, target) in model.heads.iter().zip(&s.targets) {
            let fwd = head.forward(&s.visual, s.text.as_deref(), model.dims.word);
            out.extend(
                hinge_arguments(&fwd.z, &target.positive, &target.negatives, model.margin)
                    .map(|a| a > 0.0),
            );
        }
    }
    out
}
