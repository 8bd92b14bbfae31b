//! Known-class representation subspaces.
//!
//! A [`Conceptor`] is the soft projector `S = R (R + eta^-2 I)^-1` built from
//! the correlation matrix `R = Z^T Z / N` of reference features. Its
//! eigenvectors are those of `R` and each eigenvalue `sigma` maps to
//! `sigma / (sigma + eta^-2)`, so the spectrum lies in `[0, 1)`.
//! A [`PcaProjector`] is the hard counterpart `U_k U_k^T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_finite, solve_spd, sym_eig, symmetrize, Matrix, Vector};

/// Default fraction of correlation energy the PCA subspace must capture.
pub const DEFAULT_PCA_ENERGY: f64 = 0.90;

#[derive(Debug, Clone, PartialEq)]
pub struct Conceptor {
    matrix: Matrix,
    aperture: f64,
    source_count: usize,
}

impl Conceptor {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Wraps an explicit symmetric operator, e.g. one read back from disk.
    pub fn from_matrix(matrix: Matrix, aperture: f64, source_count: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Argument("conceptor matrix must be square".into()));
        }
        check_finite(&matrix, "conceptor matrix")?;
        if !(aperture > 0.0) {
            return Err(Error::Argument(format!("aperture must be positive, got {aperture}")));
        }
        Ok(Self { matrix: symmetrize(&matrix), aperture, source_count })
    }
}

/// `R = Z^T Z / N`
pub fn correlation(z: &Matrix) -> Result<Matrix> {
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(Error::Argument("feature matrix is empty".into()));
    }
    check_finite(z, "feature matrix")?;
    Ok(symmetrize(&(z.transpose() * z / z.nrows() as f64)))
}

pub fn build_conceptor(z_old: &Matrix, aperture: f64) -> Result<Conceptor> {
    if !(aperture > 0.0) || !aperture.is_finite() {
        return Err(Error::Argument(format!("aperture must be positive, got {aperture}")));
    }
    let r = correlation(z_old)?;
    let d = r.nrows();
    let shifted = &r + Matrix::identity(d, d) * aperture.powi(-2);
    // R and (R + a I) commute, so S = R (R + aI)^-1 = (R + aI)^-1 R.
    let s = solve_spd(&shifted, &r)?;
    Ok(Conceptor { matrix: symmetrize(&s), aperture, source_count: z_old.nrows() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjector {
    matrix: Matrix,
    k: usize,
    captured_energy_fraction: f64,
}

impl PcaProjector {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn captured_energy_fraction(&self) -> f64 {
        self.captured_energy_fraction
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `I - P`, the projector onto the orthogonal complement.
    pub fn complement(&self) -> PcaProjector {
        let d = self.dim();
        PcaProjector {
            matrix: Matrix::identity(d, d) - &self.matrix,
            k: d - self.k,
            captured_energy_fraction: 1.0 - self.captured_energy_fraction,
        }
    }

    /// Accepts an explicit projector matrix (must be square).
    /// `k` is taken as the rounded trace.
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Argument("projector matrix must be square".into()));
        }
        check_finite(&matrix, "projector matrix")?;
        let k = matrix.trace().round().max(0.0) as usize;
        Ok(Self { matrix, k, captured_energy_fraction: f64::NAN })
    }
}

fn spectrum(z_old: &Matrix) -> Result<(Vector, Matrix)> {
    let r = correlation(z_old)?;
    let (values, vectors) = sym_eig(&r)?;
    // R is PSD; clip round-off negatives.
    Ok((values.map(|v| v.max(0.0)), vectors))
}

fn projector_from(values: &Vector, vectors: &Matrix, k: usize) -> PcaProjector {
    let total: f64 = values.iter().sum();
    let kept: f64 = values.iter().take(k).sum();
    let u = vectors.columns(0, k);
    PcaProjector {
        matrix: symmetrize(&(u * u.transpose())),
        k,
        captured_energy_fraction: if total > 0.0 { kept / total } else { 0.0 },
    }
}

pub fn build_pca(z_old: &Matrix, k: usize) -> Result<PcaProjector> {
    let d = z_old.ncols();
    if k == 0 || k > d {
        return Err(Error::Argument(format!("component count must be in 1..={d}, got {k}")));
    }
    let (values, vectors) = spectrum(z_old)?;
    Ok(projector_from(&values, &vectors, k))
}

/// Smallest `k` whose captured energy fraction reaches `min_fraction`.
pub fn build_pca_by_energy(z_old: &Matrix, min_fraction: f64) -> Result<PcaProjector> {
    if !(0.0..=1.0).contains(&min_fraction) {
        return Err(Error::Argument(format!("energy fraction must lie in [0, 1], got {min_fraction}")));
    }
    let (values, vectors) = spectrum(z_old)?;
    let total: f64 = values.iter().sum();
    let d = values.len();
    let mut k = d;
    if total > 0.0 {
        let mut acc = 0.0;
        for (i, v) in values.iter().enumerate() {
            acc += v;
            if acc / total >= min_fraction {
                k = i + 1;
                break;
            }
        }
    }
    Ok(projector_from(&values, &vectors, k.max(1)))
}

/// Fraction of `|z|^2` captured by the conceptor: `z^T S z / |z|^2`.
pub fn energy_ratio(z: &[f64], s: &Conceptor) -> Result<f64> {
    if z.len() != s.dim() {
        return Err(Error::Argument(format!(
            "feature has dimension {}, conceptor is {}x{}",
            z.len(),
            s.dim(),
            s.dim()
        )));
    }
    let norm_sq: f64 = z.iter().map(|x| x * x).sum();
    if !(norm_sq > 0.0) {
        return Err(Error::Degenerate("energy ratio of a zero feature vector".into()));
    }
    let m = s.matrix();
    let mut quad = 0.0;
    for i in 0..z.len() {
        let mut row = 0.0;
        for j in 0..z.len() {
            row += m[(i, j)] * z[j];
        }
        quad += z[i] * row;
    }
    Ok(quad / norm_sq)
}

/// Row-wise energy ratios of a feature matrix.
pub fn energy_ratios(z: &Matrix, s: &Conceptor) -> Result<Vec<f64>> {
    if z.ncols() != s.dim() {
        return Err(Error::Argument(format!(
            "features have {} columns, conceptor dimension is {}",
            z.ncols(),
            s.dim()
        )));
    }
    z.row_iter()
        .map(|row| {
            let v: Vec<f64> = row.iter().copied().collect();
            energy_ratio(&v, s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyStats {
    pub mean_labeled_energy: f64,
    pub per_sample: Vec<f64>,
}

pub fn labeled_energy_stats(z_l: &Matrix, s: &Conceptor) -> Result<EnergyStats> {
    if z_l.nrows() == 0 {
        return Err(Error::Argument("labeled feature matrix is empty".into()));
    }
    let per_sample = energy_ratios(z_l, s)?;
    let mean_labeled_energy = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(EnergyStats { mean_labeled_energy, per_sample })
}

/// `G S` for a batch of row vectors.
pub fn apply_soft(s: &Conceptor, g: &Matrix) -> Result<Matrix> {
    if g.ncols() != s.dim() {
        return Err(Error::Argument(format!(
            "gradient rows have dimension {}, conceptor is {}x{}",
            g.ncols(),
            s.dim(),
            s.dim()
        )));
    }
    Ok(g * s.matrix())
}
