//! Dense linear algebra and seeded randomness.
//!
//! Everything is `f64`. Matrices are `nalgebra::DMatrix`; rows are samples
//! wherever a matrix holds a batch of vectors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const SYMMETRY_RTOL: f64 = 1e-10;
const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Deterministic random stream. Equal seeds give bit-identical samples on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Derives an independent child stream, e.g. one per subsystem.
    pub fn fork(&mut self) -> SeededRng {
        SeededRng::new(self.inner.random::<u64>())
    }
}

/// `rows x cols` matrix of i.i.d. `N(mean, std^2)` draws, filled row by row.
pub fn gaussian(rng: &mut SeededRng, mean: f64, std: f64, rows: usize, cols: usize) -> Result<Matrix> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::Argument(format!("standard deviation must be >= 0, got {std}")));
    }
    if !mean.is_finite() {
        return Err(Error::Argument(format!("mean must be finite, got {mean}")));
    }
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out[(r, c)] = mean + std * rng.standard_normal();
        }
    }
    Ok(out)
}

pub fn frobenius(a: &Matrix) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn is_finite(a: &Matrix) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn check_finite(a: &Matrix, what: &str) -> Result<()> {
    if is_finite(a) {
        Ok(())
    } else {
        Err(Error::Data(format!("{what} contains non-finite entries")))
    }
}

/// Largest absolute entry of `A - A^T`.
pub fn asymmetry(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_symmetric(a: &Matrix, rtol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Argument(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    let tolerance = rtol * frobenius(a).max(f64::MIN_POSITIVE);
    let asym = asymmetry(a);
    if asym > tolerance {
        return Err(Error::Symmetry { asymmetry: asym, tolerance });
    }
    Ok(())
}

/// `(A + A^T) / 2`
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back in descending order; column `i` of the returned
/// matrix is the unit eigenvector for eigenvalue `i`.
pub fn sym_eig(a: &Matrix) -> Result<(Vector, Matrix)> {
    check_symmetric(a, SYMMETRY_RTOL)?;
    check_finite(a, "eigendecomposition input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok((Vector::zeros(0), Matrix::zeros(0, 0)));
    }
    let eig = symmetrize(a)
        .try_symmetric_eigen(EIG_EPS, EIG_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Solves `A X = B` for symmetric positive definite `A`.
///
/// If the Cholesky factorization of `A` fails, `A` is jittered by
/// `1e-8 * trace(A) / d` on the diagonal and factored once more; a second
/// failure is reported as a numerical error.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_symmetric(a, SYMMETRY_RTOL)?;
    if b.nrows() != a.nrows() {
        return Err(Error::Argument(format!(
            "right-hand side has {} rows, matrix is {}x{}",
            b.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    let d = a.nrows();
    if d == 0 {
        return Ok(Matrix::zeros(0, b.ncols()));
    }
    let sym = symmetrize(a);
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    let jitter = 1e-8 * a.trace() / d as f64;
    let mut jittered = sym;
    if jitter > 0.0 {
        for i in 0..d {
            jittered[(i, i)] += jitter;
        }
    }
    let chol =
        jittered.cholesky().ok_or_else(|| Error::Numerical("matrix is not positive definite after jitter".into()))?;
    Ok(chol.solve(b))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Matrix) -> Result<f64> {
    let (values, _) = sym_eig(a)?;
    Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Copies the selected rows into a new matrix, in the given order.
pub fn select_rows(a: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), a.ncols(), |r, c| a[(rows[r], c)])
}

/// Row-wise Euclidean norms.
pub fn row_norms(a: &Matrix) -> Vec<f64> {
    a.row_iter().map(|r| r.norm()).collect()
}
