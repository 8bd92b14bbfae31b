//! Gradient-entanglement diagnostics and clustering accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::subspace::PcaProjector;

/// Number of initial training steps the entanglement averages cover.
pub const ENTANGLEMENT_WINDOW: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeReport {
    pub step: usize,
    pub gdc: f64,
    pub soc: f64,
    pub rho_grad: f64,
    pub rho_in: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccTriple {
    pub all: f64,
    pub old: f64,
    pub new: f64,
}

/// Gradient deviation coefficient `1 - cos(g_sup, g)`, in `[0, 2]`.
pub fn gdc(g_sup: &[f64], g: &[f64]) -> Result<f64> {
    if g_sup.len() != g.len() {
        return Err(Error::Argument(format!("gradient lengths differ: {} vs {}", g_sup.len(), g.len())));
    }
    let dot: f64 = g_sup.iter().zip(g).map(|(a, b)| a * b).sum();
    let na = g_sup.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = g.iter().map(|b| b * b).sum::<f64>().sqrt();
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::Degenerate("gradient deviation of a zero-norm gradient".into()));
    }
    let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// Subspace overlap coefficient `|Z P|_F^2 / |Z|_F^2`, in `[0, 1]`.
pub fn soc(z_new: &Matrix, p_old: &PcaProjector) -> Result<f64> {
    if z_new.ncols() != p_old.dim() {
        return Err(Error::Argument(format!(
            "features have {} columns, projector dimension is {}",
            z_new.ncols(),
            p_old.dim()
        )));
    }
    let total: f64 = z_new.iter().map(|x| x * x).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("subspace overlap of an all-zero feature matrix".into()));
    }
    let projected = z_new * p_old.matrix();
    Ok(projected.iter().map(|x| x * x).sum::<f64>() / total)
}

/// Share of novel-feature energy inside the known subspace, tracked during
/// training. Same quantity as [`soc`] on current-encoder features.
pub fn rho_in(z_new_current: &Matrix, p_old: &PcaProjector) -> Result<f64> {
    soc(z_new_current, p_old)
}

/// Known-class share of the summed per-class gradient norms.
pub fn rho_grad(per_class_norms: &[f64], known: &[bool]) -> Result<f64> {
    if per_class_norms.len() != known.len() {
        return Err(Error::Argument(format!("{} norms but {} known flags", per_class_norms.len(), known.len())));
    }
    if per_class_norms.iter().any(|&n| !(n >= 0.0)) {
        return Err(Error::Argument("gradient norms must be non-negative".into()));
    }
    let total: f64 = per_class_norms.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all per-class gradient norms are zero".into()));
    }
    let known_sum: f64 = per_class_norms.iter().zip(known).filter(|(_, &k)| k).map(|(n, _)| n).sum();
    Ok(known_sum / total)
}

/// Minimum-cost perfect assignment on a square cost matrix.
///
/// Shortest augmenting paths with row/column potentials, `O(n^3)`.
/// Returns `assignment[row] = column`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays with a virtual column 0
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut col_owner = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            assignment[col_owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Hungarian-matched clustering accuracy.
///
/// One global cluster-to-class assignment maximizing matches over all
/// samples; `old`/`new` are read off that same assignment restricted to
/// samples whose true class is known/novel. A partition with no samples
/// reports 0.
///
/// Among assignments with the same total, the one matching the most
/// known-class samples wins, so `old`/`new` do not depend on cluster ids.
pub fn hungarian_acc(pred: &[usize], gt: &[usize], known_class: &[bool]) -> Result<AccTriple> {
    if pred.is_empty() {
        return Err(Error::Argument("cannot score an empty prediction".into()));
    }
    if pred.len() != gt.len() {
        return Err(Error::Argument(format!("{} predictions for {} labels", pred.len(), gt.len())));
    }
    if let Some(&bad) = gt.iter().find(|&&c| c >= known_class.len()) {
        return Err(Error::Argument(format!(
            "label {bad} has no known/novel flag ({} classes flagged)",
            known_class.len()
        )));
    }
    let n_pred = pred.iter().max().map_or(0, |m| m + 1);
    let n_gt = gt.iter().max().map_or(0, |m| m + 1);
    let size = n_pred.max(n_gt);

    let mut counts = vec![vec![0usize; size]; size];
    for (&p, &g) in pred.iter().zip(gt) {
        counts[p][g] += 1;
    }
    // Integer weights stay exact in f64 for any realistic sample count.
    let scale = (pred.len() + 1) as f64;
    let cost: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(g, &c)| {
                    let old = if g < known_class.len() && known_class[g] { c } else { 0 };
                    -(c as f64 * scale + old as f64)
                })
                .collect()
        })
        .collect();
    let mapping = min_cost_assignment(&cost);

    let (mut hit_all, mut hit_old, mut hit_new) = (0usize, 0usize, 0usize);
    let (mut n_old, mut n_new) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        let hit = mapping[p] == g;
        hit_all += hit as usize;
        if known_class[g] {
            n_old += 1;
            hit_old += hit as usize;
        } else {
            n_new += 1;
            hit_new += hit as usize;
        }
    }
    let ratio = |h: usize, n: usize| if n == 0 { 0.0 } else { h as f64 / n as f64 };
    Ok(AccTriple { all: ratio(hit_all, pred.len()), old: ratio(hit_old, n_old), new: ratio(hit_new, n_new) })
}

/// Mean of each diagnostic over reports with `step < window`.
pub fn windowed_means(reports: &[GeReport], window: usize) -> Option<GeReport> {
    let inside: Vec<&GeReport> = reports.iter().filter(|r| r.step < window).collect();
    if inside.is_empty() {
        return None;
    }
    let n = inside.len() as f64;
    let mean = |f: fn(&GeReport) -> f64| inside.iter().map(|r| f(r)).sum::<f64>() / n;
    Some(GeReport {
        step: window,
        gdc: mean(|r| r.gdc),
        soc: mean(|r| r.soc),
        rho_grad: mean(|r| r.rho_grad),
        rho_in: mean(|r| r.rho_in),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Vector;

    fn p_diag(values: &[f64]) -> PcaProjector {
        PcaProjector::from_matrix(Matrix::from_diagonal(&Vector::from_row_slice(values))).unwrap()
    }

    #[test]
    fn gdc_examples() {
        let g = [1.0, 2.0, -3.0];
        assert!(gdc(&g, &g).unwrap().abs() < 1e-12);
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        assert!((gdc(&g, &neg).unwrap() - 2.0).abs() < 1e-12);
        assert!((gdc(&[1.0, 0.0], &[0.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(gdc(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn soc_examples() {
        let p = p_diag(&[1.0, 0.0]);
        let inside = Matrix::from_row_slice(2, 2, &[2.0, 0.0, -1.0, 0.0]);
        assert!((soc(&inside, &p).unwrap() - 1.0).abs() < 1e-12);
        let outside = Matrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 1.0]);
        assert!(soc(&outside, &p).unwrap().abs() < 1e-12);
        let diag = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!((soc(&diag, &p).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(rho_in(&diag, &p).unwrap(), soc(&diag, &p).unwrap());
        assert!(matches!(soc(&Matrix::zeros(2, 2), &p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rho_grad_examples() {
        assert_eq!(rho_grad(&[1.0, 2.0, 0.0], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(rho_grad(&[1.0, 1.0, 1.0, 1.0], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(rho_grad(&[3.0, 1.0], &[true, false]).unwrap(), 0.75);
        assert!(matches!(rho_grad(&[0.0, 0.0], &[true, false]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn hungarian_examples() {
        let known = [true, false];
        let acc = hungarian_acc(&[1, 1, 0, 0], &[0, 0, 1, 1], &known).unwrap();
        assert_eq!(acc.all, 1.0);
        let acc = hungarian_acc(&[0, 0, 1, 1], &[0, 0, 1, 1], &known).unwrap();
        assert_eq!((acc.all, acc.old, acc.new), (1.0, 1.0, 1.0));
        // identity mapping: hits at 0 and 3; swapped: hits at 1 and 2
        let acc = hungarian_acc(&[0, 1, 0, 1], &[0, 0, 1, 1], &known).unwrap();
        assert_eq!(acc.all, 0.5);
        assert!(hungarian_acc(&[], &[], &known).is_err());
        assert!(hungarian_acc(&[0], &[0, 1], &known).is_err());
    }

    #[test]
    fn hungarian_more_clusters_than_classes() {
        // cluster 2 is an extra cluster that must be left unmatched or matched to a padding class
        let acc = hungarian_acc(&[0, 0, 1, 2], &[0, 0, 1, 1], &[true, false]).unwrap();
        assert_eq!(acc.all, 0.75);
        assert_eq!(acc.old, 1.0);
        assert_eq!(acc.new, 0.5);
    }

    #[test]
    fn assignment_small_cost() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn windowed_means_respects_window() {
        let reports: Vec<GeReport> =
            (0..4).map(|s| GeReport { step: s * 100, gdc: s as f64, soc: 0.5, rho_grad: 1.0, rho_in: 0.5 }).collect();
        let m = windowed_means(&reports, 200).unwrap();
        assert_eq!(m.gdc, 0.5);
        assert!(windowed_means(&[], 200).is_none());
    }
}
