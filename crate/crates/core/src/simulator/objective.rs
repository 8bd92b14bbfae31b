//! Joint category-discovery objective with analytic gradients.
//!
//! * supervised: mean cross-entropy of labeled rows against their labels;
//! * unsupervised: each unlabeled view is matched to the sharpened prediction
//!   of its partner view (targets carry no gradient), minus
//!   `entropy_weight * H(mean prediction)` over the unlabeled rows.
//!
//! Gradients are returned per feature row and for the prototype matrix; the
//! encoder gradient is `X^T dL/dz` and is left to the caller.

use crate::coordinator::BatchMask;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A batch of paired views: row `r` and row `(r + pairs) % (2 pairs)` are two
/// augmentations of the same sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub mask: BatchMask,
    /// Class label for labeled rows.
    pub labels: Vec<Option<usize>>,
    pub pairs: usize,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn partner(&self, row: usize) -> usize {
        (row + self.pairs) % (2 * self.pairs)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.inputs.nrows();
        if n != 2 * self.pairs || self.mask.len() != n || self.labels.len() != n {
            return Err(Error::Argument(format!(
                "batch of {n} rows does not hold {} view pairs with one mask/label entry per row",
                self.pairs
            )));
        }
        for r in 0..n {
            if self.mask.is_labeled(r) != self.labels[r].is_some() {
                return Err(Error::Argument(format!("row {r}: label presence disagrees with the mask")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadParams {
    pub tau_s: f64,
    pub sharpen_temp: f64,
    pub entropy_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub loss_sup: f64,
    pub loss_unsup: f64,
    /// `dL_sup/dz`, nonzero on labeled rows only.
    pub feat_grad_sup: Matrix,
    /// `dL_unsup/dz`, nonzero on unlabeled rows only.
    pub feat_grad_unsup: Matrix,
    pub proto_grad_sup: Matrix,
    pub proto_grad_unsup: Matrix,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

struct Normalized {
    unit: Matrix,
    norms: Vec<f64>,
}

fn normalize(features: &Matrix) -> Result<Normalized> {
    let mut unit = features.clone();
    let mut norms = Vec::with_capacity(features.nrows());
    for (r, mut row) in unit.row_iter_mut().enumerate() {
        let n = row.norm();
        if !(n > 0.0) {
            return Err(Error::Degenerate(format!("feature row {r} has zero norm")));
        }
        row /= n;
        norms.push(n);
    }
    Ok(Normalized { unit, norms })
}

/// Row-wise log-probabilities `log softmax(<u, c_k> / temperature)`.
fn log_probs(unit: &Matrix, prototypes: &Matrix, temperature: f64) -> Vec<Vec<f64>> {
    let scores = unit * prototypes.transpose();
    scores
        .row_iter()
        .map(|row| {
            let logits: Vec<f64> = row.iter().map(|s| s / temperature).collect();
            log_softmax(&logits)
        })
        .collect()
}

/// Sharpened soft targets `softmax(<u, c_k> / sharpen_temp)` for every row.
pub fn sharpened_targets(features: &Matrix, prototypes: &Matrix, sharpen_temp: f64) -> Result<Matrix> {
    let norm = normalize(features)?;
    let lp = log_probs(&norm.unit, prototypes, sharpen_temp);
    Ok(Matrix::from_fn(features.nrows(), prototypes.nrows(), |r, k| lp[r][k].exp()))
}

/// Back-propagates score gradients `dL/dlogits` through the cosine head.
fn head_backward(dlogits: &Matrix, norm: &Normalized, prototypes: &Matrix, tau_s: f64) -> (Matrix, Matrix) {
    let dscores = dlogits / tau_s;
    let proto_grad = dscores.transpose() * &norm.unit;
    let dunit = &dscores * prototypes;
    let mut feat_grad = Matrix::zeros(dunit.nrows(), dunit.ncols());
    for r in 0..dunit.nrows() {
        let u = norm.unit.row(r);
        let du = dunit.row(r);
        let radial = du.dot(&u);
        let row = (du - u * radial) / norm.norms[r];
        feat_grad.set_row(r, &row);
    }
    (feat_grad, proto_grad)
}

/// Evaluates both losses and their gradients at the given features.
///
/// `targets` holds the (already sharpened, gradient-free) target distribution
/// of every row; only unlabeled rows' partners are read.
pub fn evaluate_objective(
    features: &Matrix,
    prototypes: &Matrix,
    batch: &Batch,
    head: &HeadParams,
    targets: &Matrix,
) -> Result<ObjectiveEval> {
    let rows = features.nrows();
    let k = prototypes.nrows();
    if rows != batch.rows() || targets.nrows() != rows || targets.ncols() != k {
        return Err(Error::Argument("features, batch and targets disagree in shape".into()));
    }
    let norm = normalize(features)?;
    let lp = log_probs(&norm.unit, prototypes, head.tau_s);

    let labeled = batch.mask.labeled_rows();
    let unlabeled = batch.mask.unlabeled_rows();

    let mut dsup = Matrix::zeros(rows, k);
    let mut loss_sup = 0.0;
    if !labeled.is_empty() {
        let scale = 1.0 / labeled.len() as f64;
        for &r in &labeled {
            let y = batch.labels[r].ok_or_else(|| Error::Argument(format!("labeled row {r} has no label")))?;
            if y >= k {
                return Err(Error::Argument(format!("label {y} exceeds the {k} prototypes")));
            }
            loss_sup -= lp[r][y] * scale;
            for c in 0..k {
                let indicator = if c == y { 1.0 } else { 0.0 };
                dsup[(r, c)] = (lp[r][c].exp() - indicator) * scale;
            }
        }
    }

    let mut dunsup = Matrix::zeros(rows, k);
    let mut loss_unsup = 0.0;
    if !unlabeled.is_empty() {
        let scale = 1.0 / unlabeled.len() as f64;
        let mut mean_p = vec![0.0; k];
        for &r in &unlabeled {
            let q = targets.row(batch.partner(r));
            for c in 0..k {
                let p = lp[r][c].exp();
                loss_unsup -= q[c] * lp[r][c] * scale;
                dunsup[(r, c)] = (p - q[c]) * scale;
                mean_p[c] += p * scale;
            }
        }
        if head.entropy_weight != 0.0 {
            let log_mean: Vec<f64> = mean_p.iter().map(|p| p.ln()).collect();
            let entropy: f64 = -mean_p.iter().zip(&log_mean).map(|(p, l)| p * l).sum::<f64>();
            loss_unsup -= head.entropy_weight * entropy;
            let w = head.entropy_weight * scale;
            for &r in &unlabeled {
                let p: Vec<f64> = lp[r].iter().map(|l| l.exp()).collect();
                let centre: f64 = p.iter().zip(&log_mean).map(|(p, l)| p * l).sum();
                for c in 0..k {
                    dunsup[(r, c)] += w * p[c] * (log_mean[c] - centre);
                }
            }
        }
    }

    let (feat_grad_sup, proto_grad_sup) = head_backward(&dsup, &norm, prototypes, head.tau_s);
    let (feat_grad_unsup, proto_grad_unsup) = head_backward(&dunsup, &norm, prototypes, head.tau_s);
    Ok(ObjectiveEval { loss_sup, loss_unsup, feat_grad_sup, feat_grad_unsup, proto_grad_sup, proto_grad_unsup })
}

/// Mean cross-entropy of labeled inputs (no augmentation), with its
/// accuracy under argmax prediction.
pub fn supervised_loss(features: &Matrix, prototypes: &Matrix, labels: &[usize], tau_s: f64) -> Result<(f64, f64)> {
    if features.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::Argument("features and labels must be non-empty and aligned".into()));
    }
    let norm = normalize(features)?;
    let lp = log_probs(&norm.unit, prototypes, tau_s);
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (r, &y) in labels.iter().enumerate() {
        loss -= lp[r][y];
        let best = (0..lp[r].len()).fold(0, |b, c| if lp[r][c] > lp[r][b] { c } else { b });
        hits += (best == y) as usize;
    }
    let n = labels.len() as f64;
    Ok((loss / n, hits as f64 / n))
}
