//! Feature-level gradient coordination.
//!
//! Two corrections are added to the per-row feature gradient `dL/dz` before it
//! is back-propagated into the encoder:
//!
//! * anchor alignment on labeled rows: `lambda_a (z - z_ref)`, which pulls
//!   labeled features toward the frozen reference encoder's output;
//! * elastic projection on unlabeled rows: `-lambda_p tau_i (g_i S)`, which
//!   removes part of the gradient lying in the known-class conceptor, with a
//!   per-sample weight `tau_i = 1 - E(z_i) / mean_labeled_energy`.
//!
//! Row supports of the two corrections are disjoint by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::subspace::{apply_soft, energy_ratios, Conceptor, EnergyStats};

/// How raw projection weights are clipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TauClamp {
    /// `[0, 1]`
    #[default]
    ClampZeroOne,
    /// `[0, inf)`
    ClampZeroOnly,
    Unclamped,
}

impl TauClamp {
    pub fn apply(self, raw: f64) -> f64 {
        match self {
            TauClamp::ClampZeroOne => raw.clamp(0.0, 1.0),
            TauClamp::ClampZeroOnly => raw.max(0.0),
            TauClamp::Unclamped => raw,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TauClamp::ClampZeroOne => "clamp_zero_one",
            TauClamp::ClampZeroOnly => "clamp_zero_only",
            TauClamp::Unclamped => "unclamped",
        }
    }
}

impl std::str::FromStr for TauClamp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamp_zero_one" => Ok(TauClamp::ClampZeroOne),
            "clamp_zero_only" => Ok(TauClamp::ClampZeroOnly),
            "unclamped" => Ok(TauClamp::Unclamped),
            other => Err(Error::Argument(format!(
                "unknown tau clamp policy '{other}' (expected clamp_zero_one, clamp_zero_only or unclamped)"
            ))),
        }
    }
}

/// Per-sample projection weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionWeighting {
    /// `tau_i` from each feature's energy ratio.
    #[default]
    EnergyAdaptive,
    /// `tau_i = 1` for every unlabeled row.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorConfig {
    pub lambda_a: f64,
    pub lambda_p: f64,
    /// Conceptor aperture.
    pub eta: f64,
    pub tau_clamp: TauClamp,
    /// Supervised loss weight.
    pub alpha: f64,
    /// Unsupervised loss weight.
    pub beta: f64,
    /// Softmax temperature of the classifier head.
    pub tau_s: f64,
    pub weighting: ProjectionWeighting,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            lambda_a: 0.7,
            lambda_p: 0.5,
            eta: 2.0,
            tau_clamp: TauClamp::ClampZeroOne,
            alpha: 0.35,
            beta: 0.65,
            tau_s: 0.1,
            weighting: ProjectionWeighting::EnergyAdaptive,
        }
    }
}

impl CoordinatorConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Argument(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        finite_nonneg("lambda_a", self.lambda_a)?;
        finite_nonneg("lambda_p", self.lambda_p)?;
        finite_nonneg("alpha", self.alpha)?;
        finite_nonneg("beta", self.beta)?;
        if !(self.alpha + self.beta > 0.0) {
            return Err(Error::Argument("alpha + beta must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Argument(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.tau_s > 0.0 && self.tau_s.is_finite()) {
            return Err(Error::Argument(format!("tau_s must be positive, got {}", self.tau_s)));
        }
        Ok(())
    }
}

/// Which rows of a batch are labeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchMask {
    labeled: Vec<bool>,
}

impl BatchMask {
    pub fn new(labeled: Vec<bool>) -> Self {
        Self { labeled }
    }

    pub fn len(&self) -> usize {
        self.labeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labeled.is_empty()
    }

    pub fn is_labeled(&self, row: usize) -> bool {
        self.labeled[row]
    }

    pub fn flags(&self) -> &[bool] {
        &self.labeled
    }

    pub fn labeled_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labeled[i]).collect()
    }

    pub fn unlabeled_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.labeled[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientAdjustment {
    /// Zero on unlabeled rows.
    pub delta_align: Matrix,
    /// Zero on labeled rows.
    pub delta_proj: Matrix,
    /// Projection weight per batch row; zero on labeled rows.
    pub tau: Vec<f64>,
}

impl GradientAdjustment {
    pub fn total(&self) -> Matrix {
        &self.delta_align + &self.delta_proj
    }
}

fn same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Argument(format!("{what}: shape {:?} does not match {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `lambda_a (z_l - z_hat_l)`
pub fn alignment_term(z_l: &Matrix, z_hat_l: &Matrix, lambda_a: f64) -> Result<Matrix> {
    same_shape(z_l, z_hat_l, "alignment term")?;
    Ok((z_l - z_hat_l) * lambda_a)
}

/// Projection weights for unlabeled features, clipped according to `clamp`.
pub fn adaptive_weights(z_u: &Matrix, s: &Conceptor, mean_labeled_energy: f64, clamp: TauClamp) -> Result<Vec<f64>> {
    if !(mean_labeled_energy > 0.0) {
        return Err(Error::Argument(format!("mean labeled energy must be positive, got {mean_labeled_energy}")));
    }
    Ok(energy_ratios(z_u, s)?.into_iter().map(|e| clamp.apply(1.0 - e / mean_labeled_energy)).collect())
}

/// Row `i` becomes `-lambda_p tau_i (g_i S)`.
pub fn elastic_projection(g_u: &Matrix, s: &Conceptor, tau: &[f64], lambda_p: f64) -> Result<Matrix> {
    if tau.len() != g_u.nrows() {
        return Err(Error::Argument(format!("{} projection weights for {} gradient rows", tau.len(), g_u.nrows())));
    }
    let mut projected = apply_soft(s, g_u)?;
    for (i, mut row) in projected.row_iter_mut().enumerate() {
        row *= -lambda_p * tau[i];
    }
    Ok(projected)
}

/// Applies both corrections to a batch of feature gradients.
///
/// `feature_grads`, `features` and `ref_features` share one row per batch
/// sample; `mask` says which rows are labeled. Returns the adjusted gradients
/// `feature_grads + delta_align + delta_proj` and the corrections themselves.
pub fn coordinate(
    feature_grads: &Matrix,
    features: &Matrix,
    ref_features: &Matrix,
    mask: &BatchMask,
    s: &Conceptor,
    stats: &EnergyStats,
    cfg: &CoordinatorConfig,
) -> Result<(Matrix, GradientAdjustment)> {
    same_shape(feature_grads, features, "feature gradients vs features")?;
    same_shape(features, ref_features, "features vs reference features")?;
    if mask.len() != features.nrows() {
        return Err(Error::Argument(format!("mask has {} entries for {} rows", mask.len(), features.nrows())));
    }
    if features.ncols() != s.dim() {
        return Err(Error::Argument(format!(
            "features have {} columns, conceptor dimension is {}",
            features.ncols(),
            s.dim()
        )));
    }

    let (rows, cols) = features.shape();
    let mut delta_align = Matrix::zeros(rows, cols);
    let mut delta_proj = Matrix::zeros(rows, cols);
    let mut tau = vec![0.0; rows];

    let labeled = mask.labeled_rows();
    if !labeled.is_empty() && cfg.lambda_a != 0.0 {
        for &i in &labeled {
            let row = (features.row(i) - ref_features.row(i)) * cfg.lambda_a;
            delta_align.set_row(i, &row);
        }
    }

    let unlabeled = mask.unlabeled_rows();
    if !unlabeled.is_empty() {
        let z_u = crate::numerics::select_rows(features, &unlabeled);
        let g_u = crate::numerics::select_rows(feature_grads, &unlabeled);
        let weights = match cfg.weighting {
            ProjectionWeighting::EnergyAdaptive => adaptive_weights(&z_u, s, stats.mean_labeled_energy, cfg.tau_clamp)?,
            ProjectionWeighting::Uniform => vec![1.0; unlabeled.len()],
        };
        if cfg.lambda_p != 0.0 {
            let proj = elastic_projection(&g_u, s, &weights, cfg.lambda_p)?;
            for (k, &i) in unlabeled.iter().enumerate() {
                delta_proj.set_row(i, &proj.row(k));
            }
        }
        for (k, &i) in unlabeled.iter().enumerate() {
            tau[i] = weights[k];
        }
    }

    let adjusted = feature_grads + &delta_align + &delta_proj;
    Ok((adjusted, GradientAdjustment { delta_align, delta_proj, tau }))
}

/// Explicit proximal penalty `(lambda_a / 2) sum_i |z_i - z_hat_i|^2` and its gradient.
pub fn proximal_loss(z_l: &Matrix, z_hat_l: &Matrix, lambda_a: f64) -> Result<(f64, Matrix)> {
    same_shape(z_l, z_hat_l, "proximal loss")?;
    let diff = z_l - z_hat_l;
    let loss = 0.5 * lambda_a * diff.iter().map(|x| x * x).sum::<f64>();
    Ok((loss, diff * lambda_a))
}
