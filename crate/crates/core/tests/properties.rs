use eagc::coordinator::{coordinate, elastic_projection, BatchMask, CoordinatorConfig};
use eagc::metrics::{gdc, hungarian_acc, soc};
use eagc::numerics::{gaussian, sym_eig, Matrix, SeededRng};
use eagc::subspace::{
    apply_soft, build_conceptor, build_pca, correlation, energy_ratio, labeled_energy_stats, Conceptor,
};
use proptest::prelude::*;

fn conceptor_case(seed: u64, n: usize, d: usize, eta: f64) -> (Matrix, Conceptor) {
    let mut rng = SeededRng::new(seed);
    let z = gaussian(&mut rng, 0.0, 1.0, n, d).unwrap();
    let s = build_conceptor(&z, eta).unwrap();
    (z, s)
}

fn brute_force_acc(pred: &[usize], gt: &[usize], classes: usize) -> f64 {
    let clusters = pred.iter().copied().max().unwrap_or(0) + 1;
    let size = clusters.max(classes);
    let mut perm: Vec<usize> = (0..size).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hits = pred.iter().zip(gt).filter(|(&c, &y)| p[c] == y).count();
        best = best.max(hits);
    });
    best as f64 / pred.len() as f64
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conceptor_eigenvalues_follow_the_aperture_map(seed in 0u64..10_000, n in 4usize..=64, d in 2usize..=32, eta in 0.1f64..10.0) {
        let (z, s) = conceptor_case(seed, n, d, eta);
        let r = correlation(&z).unwrap();
        let (sigma, vecs) = sym_eig(&r).unwrap();
        let inv = eta.powi(-2);
        for i in 0..d {
            let v = vecs.column(i);
            let expected = sigma[i] / (sigma[i] + inv);
            let got = (v.transpose() * s.matrix() * v)[(0, 0)];
            prop_assert!((got - expected).abs() < 1e-8, "{} vs {}", got, expected);
        }
    }

    #[test]
    fn wider_aperture_never_shrinks_eigenvalues(seed in 0u64..10_000, eta in 0.1f64..5.0, factor in 1.0f64..4.0) {
        let (z, narrow) = conceptor_case(seed, 20, 6, eta);
        let wide = build_conceptor(&z, eta * factor).unwrap();
        let (a, _) = sym_eig(narrow.matrix()).unwrap();
        let (b, _) = sym_eig(wide.matrix()).unwrap();
        for i in 0..6 {
            prop_assert!(b[i] >= a[i] - 1e-12);
        }
    }

    #[test]
    fn energy_ratio_is_bounded_by_top_eigenvalue(seed in 0u64..10_000, eta in 0.1f64..5.0) {
        let (_, s) = conceptor_case(seed, 12, 5, eta);
        let (eig, _) = sym_eig(s.matrix()).unwrap();
        let mut rng = SeededRng::new(seed ^ 1);
        let z = gaussian(&mut rng, 0.0, 1.0, 1, 5).unwrap();
        let e = energy_ratio(z.as_slice(), &s).unwrap();
        prop_assert!(e >= -1e-12 && e <= eig[0] + 1e-12);
    }

    #[test]
    fn soc_and_its_complement_sum_to_one(seed in 0u64..10_000, k in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let z_old = gaussian(&mut rng, 0.0, 1.0, 30, 6).unwrap();
        let z_new = gaussian(&mut rng, 0.0, 1.0, 10, 6).unwrap();
        let p = build_pca(&z_old, k).unwrap();
        let total = soc(&z_new, &p).unwrap() + soc(&z_new, &p.complement()).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gdc_ignores_positive_scaling(seed in 0u64..10_000, c1 in 0.01f64..100.0, c2 in 0.01f64..100.0) {
        let mut rng = SeededRng::new(seed);
        let a: Vec<f64> = (0..12).map(|_| rng.standard_normal()).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.standard_normal()).collect();
        let sa: Vec<f64> = a.iter().map(|x| x * c1).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * c2).collect();
        prop_assert!((gdc(&a, &b).unwrap() - gdc(&sa, &sb).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn hungarian_matches_exhaustive_search(seed in 0u64..10_000, classes in 1usize..=6, clusters in 1usize..=6, n in 1usize..=30) {
        let mut rng = SeededRng::new(seed);
        let gt: Vec<usize> = (0..n).map(|_| rng.index(classes)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.index(clusters)).collect();
        let known: Vec<bool> = (0..classes).map(|c| c < classes.div_ceil(2)).collect();
        let acc = hungarian_acc(&pred, &gt, &known).unwrap();
        prop_assert!((acc.all - brute_force_acc(&pred, &gt, classes)).abs() < 1e-12);
    }

    #[test]
    fn relabeling_clusters_leaves_accuracy_unchanged(seed in 0u64..10_000) {
        let mut rng = SeededRng::new(seed);
        let gt: Vec<usize> = (0..25).map(|_| rng.index(5)).collect();
        let pred: Vec<usize> = (0..25).map(|_| rng.index(5)).collect();
        let mut relabel: Vec<usize> = (0..5).collect();
        rng.shuffle(&mut relabel);
        let renamed: Vec<usize> = pred.iter().map(|&c| relabel[c]).collect();
        let known = [true, true, false, false, false];
        prop_assert_eq!(hungarian_acc(&pred, &gt, &known).unwrap(), hungarian_acc(&renamed, &gt, &known).unwrap());
    }

    #[test]
    fn projection_never_amplifies_subspace_content(seed in 0u64..10_000, lambda_p in 0.0f64..=1.0, tau in 0.0f64..=1.0) {
        let (_, s) = conceptor_case(seed, 16, 5, 2.0);
        let mut rng = SeededRng::new(seed ^ 7);
        let g = gaussian(&mut rng, 0.0, 1.0, 4, 5).unwrap();
        let adjusted = &g + elastic_projection(&g, &s, &[tau; 4], lambda_p).unwrap();
        let before = apply_soft(&s, &g).unwrap();
        let after = apply_soft(&s, &adjusted).unwrap();
        for r in 0..4 {
            prop_assert!(after.row(r).norm() <= before.row(r).norm() + 1e-12);
        }
    }

    #[test]
    fn stronger_projection_suppresses_more(seed in 0u64..10_000, lo in 0.0f64..1.0, step in 0.0f64..1.0, tau in 0.01f64..=1.0) {
        let hi = (lo + step).min(1.0);
        let (_, s) = conceptor_case(seed, 16, 5, 2.0);
        let mut rng = SeededRng::new(seed ^ 9);
        let g = gaussian(&mut rng, 0.0, 1.0, 3, 5).unwrap();
        let weak = apply_soft(&s, &(&g + elastic_projection(&g, &s, &[tau; 3], lo).unwrap())).unwrap();
        let strong = apply_soft(&s, &(&g + elastic_projection(&g, &s, &[tau; 3], hi).unwrap())).unwrap();
        for r in 0..3 {
            prop_assert!(strong.row(r).norm() <= weak.row(r).norm() + 1e-12);
        }
    }

    #[test]
    fn higher_energy_features_are_projected_less(seed in 0u64..10_000) {
        let mut rng = SeededRng::new(seed);
        // Known features live mostly in the first two coordinates.
        let mut z_old = gaussian(&mut rng, 0.0, 0.05, 40, 4).unwrap();
        for r in 0..40 {
            z_old[(r, 0)] += 2.0 * rng.standard_normal();
            z_old[(r, 1)] += 2.0 * rng.standard_normal();
        }
        let s = build_conceptor(&z_old, 2.0).unwrap();
        let stats = labeled_energy_stats(&z_old, &s).unwrap();
        let g_row = gaussian(&mut rng, 0.0, 1.0, 1, 4).unwrap();
        let mut features = Matrix::zeros(2, 4);
        features.set_row(0, &Matrix::from_row_slice(1, 4, &[1.0, 0.5, 0.6, 0.4]).row(0));
        features.set_row(1, &Matrix::from_row_slice(1, 4, &[0.1, 0.1, 1.0, 1.0]).row(0));
        let grads = Matrix::from_fn(2, 4, |_, c| g_row[(0, c)]);
        let mask = BatchMask::new(vec![false, false]);
        let (_, adj) = coordinate(&grads, &features, &features, &mask, &s, &stats, &CoordinatorConfig::default()).unwrap();
        let e_hi = energy_ratio(features.row(0).transpose().as_slice(), &s).unwrap();
        let e_lo = energy_ratio(features.row(1).transpose().as_slice(), &s).unwrap();
        prop_assert!(e_hi > e_lo);
        prop_assert!(adj.delta_proj.row(0).norm() <= adj.delta_proj.row(1).norm());
    }

    #[test]
    fn corrections_touch_disjoint_rows(seed in 0u64..10_000, flags in proptest::collection::vec(any::<bool>(), 1..12)) {
        let (z_old, s) = conceptor_case(seed, 16, 4, 2.0);
        let stats = labeled_energy_stats(&z_old, &s).unwrap();
        let n = flags.len();
        let mut rng = SeededRng::new(seed ^ 3);
        let grads = gaussian(&mut rng, 0.0, 1.0, n, 4).unwrap();
        let z = gaussian(&mut rng, 0.0, 1.0, n, 4).unwrap();
        let z_hat = gaussian(&mut rng, 0.0, 1.0, n, 4).unwrap();
        let cfg = CoordinatorConfig { weighting: eagc::coordinator::ProjectionWeighting::Uniform, ..CoordinatorConfig::default() };
        let (_, adj) = coordinate(&grads, &z, &z_hat, &BatchMask::new(flags), &s, &stats, &cfg).unwrap();
        prop_assert!(adj.delta_align.component_mul(&adj.delta_proj).iter().all(|&x| x == 0.0));
    }
}
