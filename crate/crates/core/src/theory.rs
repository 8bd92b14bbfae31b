//! Deviation dynamics of labeled features around the supervised optimum.
//!
//! Near the optimum the supervised loss is quadratic with Hessian `H` and the
//! unsupervised objective acts as zero-mean noise with covariance `Sigma`.
//! One feature-level gradient step is the linear stochastic system
//!
//! ```text
//! delta_{t+1} = (I - eta (H + lambda I)) delta_t - eta xi_t
//! ```
//!
//! with `lambda = 0` without the proximal anchor. To first order in `eta` its
//! stationary covariance solves the Lyapunov equation
//! `A C + C A = eta Sigma` with `A = H + lambda I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_symmetric, frobenius, sym_eig, symmetrize, Matrix, SeededRng};

const SYMMETRY_RTOL: f64 = 1e-10;
/// Tolerance of the ordering verdicts reported by [`lemma1_report`].
pub const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystemSpec {
    pub hessian: Matrix,
    pub lambda_a: f64,
    /// Step size of the feature update (not the conceptor aperture).
    pub eta_lr: f64,
    pub noise_cov: Matrix,
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl LinearSystemSpec {
    /// Burn-in defaults to 10% of `steps`.
    pub fn new(hessian: Matrix, lambda_a: f64, eta_lr: f64, noise_cov: Matrix, steps: usize, seed: u64) -> Self {
        Self { hessian, lambda_a, eta_lr, noise_cov, steps, burn_in: steps / 10, seed }
    }

    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    fn validate(&self) -> Result<()> {
        check_symmetric(&self.hessian, SYMMETRY_RTOL)?;
        check_symmetric(&self.noise_cov, SYMMETRY_RTOL)?;
        if self.noise_cov.nrows() != self.hessian.nrows() {
            return Err(Error::Argument(format!(
                "noise covariance is {}x{}, Hessian is {}x{}",
                self.noise_cov.nrows(),
                self.noise_cov.ncols(),
                self.hessian.nrows(),
                self.hessian.ncols()
            )));
        }
        if !(self.eta_lr > 0.0) || !self.eta_lr.is_finite() {
            return Err(Error::Argument(format!("step size must be positive, got {}", self.eta_lr)));
        }
        if !(self.lambda_a >= 0.0) || !self.lambda_a.is_finite() {
            return Err(Error::Argument(format!("lambda_a must be >= 0, got {}", self.lambda_a)));
        }
        if self.burn_in >= self.steps {
            return Err(Error::Argument(format!(
                "burn-in ({}) must be smaller than the number of steps ({})",
                self.burn_in, self.steps
            )));
        }
        Ok(())
    }

    /// Effective curvature `H + lambda I` (or `H` without the anchor).
    pub fn curvature(&self, with_prox: bool) -> Matrix {
        let d = self.dim();
        let shift = if with_prox { self.lambda_a } else { 0.0 };
        &self.hessian + Matrix::identity(d, d) * shift
    }

    /// Spectral radius of the transition matrix `I - eta A`.
    pub fn spectral_radius(&self, with_prox: bool) -> Result<f64> {
        let d = self.dim();
        let transition = Matrix::identity(d, d) - self.curvature(with_prox) * self.eta_lr;
        let (values, _) = sym_eig(&symmetrize(&transition))?;
        Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Rejects specs whose base or anchored dynamics are not contractive.
    pub fn check_stable(&self) -> Result<()> {
        self.validate()?;
        for with_prox in [false, true] {
            let spectral_radius = self.spectral_radius(with_prox)?;
            if !(spectral_radius < 1.0) {
                return Err(Error::Stability { spectral_radius });
            }
        }
        Ok(())
    }
}

/// Symmetric square root of a PSD matrix; negative round-off eigenvalues clip to 0.
fn psd_sqrt(a: &Matrix) -> Result<Matrix> {
    let (values, vectors) = sym_eig(a)?;
    if let Some(&min) = values.iter().min_by(|a, b| a.total_cmp(b)) {
        if min < -1e-10 * values.amax().max(1.0) {
            return Err(Error::Argument(format!(
                "noise covariance is not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
    }
    let roots = values.map(|v| v.max(0.0).sqrt());
    Ok(&vectors * Matrix::from_diagonal(&roots) * vectors.transpose())
}

/// Runs the deviation chain from `delta_0 = 0` and returns the sample
/// covariance of the post-burn-in states.
pub fn simulate_deviation(spec: &LinearSystemSpec, with_prox: bool) -> Result<Matrix> {
    spec.check_stable()?;
    let d = spec.dim();
    let transition = Matrix::identity(d, d) - spec.curvature(with_prox) * spec.eta_lr;
    let noise_root = psd_sqrt(&spec.noise_cov)? * spec.eta_lr;

    // row-major copies for the inner loop
    let t: Vec<f64> = (0..d * d).map(|k| transition[(k / d, k % d)]).collect();
    let l: Vec<f64> = (0..d * d).map(|k| noise_root[(k / d, k % d)]).collect();

    let mut rng = SeededRng::new(spec.seed);
    let mut delta = vec![0.0f64; d];
    let mut next = vec![0.0f64; d];
    let mut eps = vec![0.0f64; d];
    let mut sum = vec![0.0f64; d];
    let mut outer = vec![0.0f64; d * d];
    let mut count = 0usize;

    for step in 0..spec.steps {
        for e in eps.iter_mut() {
            *e = rng.standard_normal();
        }
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += t[i * d + j] * delta[j] - l[i * d + j] * eps[j];
            }
            next[i] = acc;
        }
        std::mem::swap(&mut delta, &mut next);
        if step >= spec.burn_in {
            count += 1;
            for i in 0..d {
                sum[i] += delta[i];
                for j in 0..d {
                    outer[i * d + j] += delta[i] * delta[j];
                }
            }
        }
    }

    let n = count as f64;
    let cov = Matrix::from_fn(d, d, |i, j| outer[i * d + j] / n - (sum[i] / n) * (sum[j] / n));
    Ok(symmetrize(&cov))
}

/// Solves `A X + X A = rhs` for symmetric positive definite `A` in `A`'s eigenbasis.
pub fn lyapunov_solve(a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    check_symmetric(a, SYMMETRY_RTOL)?;
    check_symmetric(rhs, SYMMETRY_RTOL)?;
    if rhs.shape() != a.shape() {
        return Err(Error::Argument(format!("right-hand side is {:?}, A is {:?}", rhs.shape(), a.shape())));
    }
    let (values, vectors) = sym_eig(a)?;
    let rotated = vectors.transpose() * rhs * &vectors;
    let n = a.nrows();
    let scale = values.amax().max(f64::MIN_POSITIVE);
    let mut solved = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let denom = values[i] + values[j];
            if denom.abs() <= 1e-14 * scale {
                return Err(Error::Numerical(format!("Lyapunov operator is singular (a_{i} + a_{j} = {denom:.3e})")));
            }
            solved[(i, j)] = rotated[(i, j)] / denom;
        }
    }
    Ok(symmetrize(&(&vectors * solved * vectors.transpose())))
}

/// Whether `A <= B` in the PSD order: smallest eigenvalue of `B - A` is at least `-tol`.
/// Returns the verdict and that eigenvalue.
pub fn psd_order(a: &Matrix, b: &Matrix, tol: f64) -> Result<(bool, f64)> {
    check_symmetric(a, SYMMETRY_RTOL)?;
    check_symmetric(b, SYMMETRY_RTOL)?;
    if a.shape() != b.shape() {
        return Err(Error::Argument(format!("shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let (values, _) = sym_eig(&symmetrize(&(b - a)))?;
    let margin = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((margin >= -tol, margin))
}

fn nested(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rel_error(empirical: &Matrix, analytic: &Matrix) -> f64 {
    let denom = frobenius(analytic);
    if denom > 0.0 {
        frobenius(&(empirical - analytic)) / denom
    } else {
        frobenius(empirical)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub dim: usize,
    pub lambda_a: f64,
    pub eta_lr: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub empirical_cov_base: Vec<Vec<f64>>,
    pub empirical_cov_prox: Vec<Vec<f64>>,
    pub analytic_cov_base: Vec<Vec<f64>>,
    pub analytic_cov_prox: Vec<Vec<f64>>,
    /// Smallest eigenvalue of `analytic_base - analytic_prox`.
    pub psd_margin: f64,
    pub deviation_ordering_holds: bool,
    pub empirical_psd_margin: f64,
    pub empirical_ordering_holds: bool,
    pub empirical_rel_error_base: f64,
    pub empirical_rel_error_prox: f64,
    /// Smallest eigenvalue of `H C H - (H + lambda I) C' (H + lambda I)`;
    /// reported only, see `gradient_note`.
    pub gradient_cov_margin: f64,
    pub gradient_ordering_holds: bool,
    pub gradient_note: String,
}

/// Analytic and simulated deviation covariances with and without the anchor.
pub fn lemma1_report(spec: &LinearSystemSpec) -> Result<CovarianceReport> {
    spec.check_stable()?;
    let rhs = &spec.noise_cov * spec.eta_lr;
    let base_curv = spec.curvature(false);
    let prox_curv = spec.curvature(true);

    let analytic_base = lyapunov_solve(&base_curv, &rhs)?;
    let analytic_prox = lyapunov_solve(&prox_curv, &rhs)?;
    let (deviation_ordering_holds, psd_margin) = psd_order(&analytic_prox, &analytic_base, ORDER_TOL)?;

    let empirical_base = simulate_deviation(spec, false)?;
    let empirical_prox = simulate_deviation(spec, true)?;
    let (empirical_ordering_holds, empirical_psd_margin) = psd_order(&empirical_prox, &empirical_base, ORDER_TOL)?;

    let grad_base = symmetrize(&(&base_curv * &analytic_base * &base_curv));
    let grad_prox = symmetrize(&(&prox_curv * &analytic_prox * &prox_curv));
    let (gradient_ordering_holds, gradient_cov_margin) = psd_order(&grad_prox, &grad_base, ORDER_TOL)?;
    let gradient_note = if gradient_ordering_holds {
        "gradient covariance (H+lI)C'(H+lI) <= H C H holds for this spec".to_string()
    } else {
        "gradient covariance (H+lI)C'(H+lI) <= H C H does NOT hold; for commuting H and Sigma \
         it equals eta*Sigma*(H+lI)/2 versus eta*Sigma*H/2, so only the deviation ordering C' <= C is asserted"
            .to_string()
    };

    Ok(CovarianceReport {
        dim: spec.dim(),
        lambda_a: spec.lambda_a,
        eta_lr: spec.eta_lr,
        steps: spec.steps,
        burn_in: spec.burn_in,
        seed: spec.seed,
        empirical_rel_error_base: rel_error(&empirical_base, &analytic_base),
        empirical_rel_error_prox: rel_error(&empirical_prox, &analytic_prox),
        empirical_cov_base: nested(&empirical_base),
        empirical_cov_prox: nested(&empirical_prox),
        analytic_cov_base: nested(&analytic_base),
        analytic_cov_prox: nested(&analytic_prox),
        psd_margin,
        deviation_ordering_holds,
        empirical_psd_margin,
        empirical_ordering_holds,
        gradient_cov_margin,
        gradient_ordering_holds,
        gradient_note,
    })
}

/// Random orthogonal matrix, the Q factor of a Gaussian matrix.
pub fn random_rotation(rng: &mut SeededRng, d: usize) -> Result<Matrix> {
    let g = crate::numerics::gaussian(rng, 0.0, 1.0, d, d)?;
    Ok(g.qr().q())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Vector;

    fn diag(values: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(values))
    }

    #[test]
    fn lyapunov_diagonal_and_identity() {
        let x = lyapunov_solve(&diag(&[1.0, 2.0]), &(Matrix::identity(2, 2) * 2.0)).unwrap();
        assert!(frobenius(&(x - diag(&[1.0, 0.5]))) < 1e-12);
        let rhs = Matrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
        let x = lyapunov_solve(&Matrix::identity(2, 2), &rhs).unwrap();
        assert!(frobenius(&(x - &rhs * 0.5)) < 1e-12);
    }

    #[test]
    fn lyapunov_residual_on_random_spd() {
        let mut rng = SeededRng::new(13);
        for d in [2, 5, 9, 16] {
            let g = crate::numerics::gaussian(&mut rng, 0.0, 1.0, d, d).unwrap();
            let a = symmetrize(&(&g * g.transpose() + Matrix::identity(d, d) * 0.1));
            let h = crate::numerics::gaussian(&mut rng, 0.0, 1.0, d, d).unwrap();
            let rhs = symmetrize(&(&h * h.transpose()));
            let x = lyapunov_solve(&a, &rhs).unwrap();
            let residual = frobenius(&(&a * &x + &x * &a - &rhs));
            assert!(residual <= 1e-8 * frobenius(&rhs), "d={d} residual={residual}");
        }
    }

    #[test]
    fn psd_order_examples() {
        let i = Matrix::identity(2, 2);
        let (holds, margin) = psd_order(&i, &i, 1e-12).unwrap();
        assert!(holds && margin.abs() < 1e-15);
        let (holds, margin) = psd_order(&Matrix::zeros(2, 2), &i, 1e-12).unwrap();
        assert!(holds && (margin - 1.0).abs() < 1e-12);
        let (holds, margin) = psd_order(&diag(&[2.0]), &diag(&[1.0]), 1e-12).unwrap();
        assert!(!holds && (margin + 1.0).abs() < 1e-12);
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(psd_order(&asym, &i, 1e-12).is_err());
    }

    #[test]
    fn noiseless_chain_collapses() {
        let spec = LinearSystemSpec::new(diag(&[1.0, 2.0]), 0.5, 0.1, Matrix::zeros(2, 2), 1000, 1);
        let cov = simulate_deviation(&spec, false).unwrap();
        assert!(frobenius(&cov) < 1e-20);
    }

    #[test]
    fn zero_anchor_gives_identical_trajectories() {
        let spec = LinearSystemSpec::new(diag(&[1.0, 0.5]), 0.0, 0.05, Matrix::identity(2, 2), 5000, 3);
        assert_eq!(simulate_deviation(&spec, true).unwrap(), simulate_deviation(&spec, false).unwrap());
    }

    #[test]
    fn scalar_stationary_variance() {
        // eta sigma^2 / (2 h) = 0.005
        let spec = LinearSystemSpec::new(diag(&[1.0]), 0.0, 0.01, diag(&[1.0]), 1_000_000, 7);
        let var = simulate_deviation(&spec, false).unwrap()[(0, 0)];
        assert!((var - 0.005).abs() < 0.0005, "variance {var}");
    }

    #[test]
    fn seeded_simulation_is_deterministic() {
        let spec = LinearSystemSpec::new(diag(&[1.0, 1.5]), 0.3, 0.02, Matrix::identity(2, 2), 2000, 99);
        assert_eq!(simulate_deviation(&spec, true).unwrap(), simulate_deviation(&spec, true).unwrap());
    }

    #[test]
    fn unstable_spec_is_rejected() {
        let spec = LinearSystemSpec::new(diag(&[1.0]), 0.7, 2.5, diag(&[1.0]), 100, 0);
        assert!(matches!(simulate_deviation(&spec, false), Err(Error::Stability { .. })));
        // stable without the anchor, unstable with it
        let spec = LinearSystemSpec::new(diag(&[1.0]), 0.7, 1.5, diag(&[1.0]), 100, 0);
        assert!(matches!(lemma1_report(&spec), Err(Error::Stability { .. })));
    }

    #[test]
    fn report_closed_forms() {
        let spec = LinearSystemSpec::new(Matrix::identity(2, 2), 0.7, 0.01, Matrix::identity(2, 2), 20_000, 5);
        let report = lemma1_report(&spec).unwrap();
        assert!((report.analytic_cov_base[0][0] - 0.005).abs() < 1e-12);
        assert!((report.analytic_cov_prox[0][0] - 0.01 / 3.4).abs() < 1e-12);
        assert!(report.deviation_ordering_holds);
        assert!((report.psd_margin - (0.005 - 0.01 / 3.4)).abs() < 1e-12);
        assert!((report.psd_margin - 0.00206).abs() < 1e-5);
        assert!(!report.gradient_ordering_holds);

        let spec = LinearSystemSpec { lambda_a: 0.0, ..spec };
        let report = lemma1_report(&spec).unwrap();
        assert_eq!(report.analytic_cov_base, report.analytic_cov_prox);
        assert_eq!(report.psd_margin, 0.0);
    }

    #[test]
    fn empirical_error_shrinks_with_more_steps() {
        let h = diag(&[0.8, 1.6]);
        let short = LinearSystemSpec::new(h.clone(), 0.7, 0.01, Matrix::identity(2, 2), 10_000, 21);
        let long = LinearSystemSpec::new(h, 0.7, 0.01, Matrix::identity(2, 2), 1_000_000, 21);
        let a = lemma1_report(&short).unwrap();
        let b = lemma1_report(&long).unwrap();
        assert!(b.empirical_rel_error_base < a.empirical_rel_error_base);
        assert!(b.empirical_rel_error_prox < a.empirical_rel_error_prox);
    }
}
