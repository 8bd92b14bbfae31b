mod common;

use common::{small_config, small_data};
use eagc::io::trace_to_csv;
use eagc::metrics::hungarian_acc;
use eagc::numerics::Matrix;
use eagc::simulator::{
    evaluate, gen_synthetic, train_gcd, train_reference, DatasetSplit, EagcMode, Model, SyntheticSpec, TrainConfig,
};

fn run(data: &DatasetSplit, cfg: &TrainConfig) -> eagc::simulator::TrainTrace {
    let ref_cfg = TrainConfig {
        feature_dim: cfg.feature_dim,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        ..TrainConfig::reference_default()
    };
    let (reference, _) = train_reference(data, &ref_cfg).unwrap();
    train_gcd(data, &reference, cfg).unwrap()
}

#[test]
fn disabled_coordination_equals_zero_strengths() {
    let data = small_data(1);
    let off = TrainConfig { eagc: EagcMode::Off, ..small_config() };
    let mut zero = small_config();
    zero.coordinator.lambda_a = 0.0;
    zero.coordinator.lambda_p = 0.0;
    let (reference, _) = train_reference(&data, &small_config()).unwrap();
    let a = train_gcd(&data, &reference, &off).unwrap();
    let b = train_gcd(&data, &reference, &zero).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loss_variant_tracks_hook_without_projection() {
    let data = small_data(2);
    let mut on = small_config();
    on.coordinator.lambda_p = 0.0;
    let variant = TrainConfig { eagc: EagcMode::LossVariant, ..on };
    let (reference, _) = train_reference(&data, &small_config()).unwrap();
    let a = train_gcd(&data, &reference, &on).unwrap();
    let b = train_gcd(&data, &reference, &variant).unwrap();
    assert_eq!(trace_to_csv(&a.records), trace_to_csv(&b.records));
    assert_eq!(a.epoch_acc, b.epoch_acc);
}

#[test]
fn supervised_loss_falls_over_the_first_epochs() {
    for seed in 0..3 {
        let data = gen_synthetic(&SyntheticSpec::benchmark(seed)).unwrap();
        for eagc in [EagcMode::On] {
            let cfg = TrainConfig { seed, eagc, epochs: 5, ..TrainConfig::default() };
            let trace = run(&data, &cfg);
            for e in 0..5 {
                assert!(
                    trace.labeled_loss[e + 1] <= trace.labeled_loss[e],
                    "seed {seed} {:?} epoch {e}: {:?}",
                    eagc,
                    trace.labeled_loss
                );
            }
        }
    }
}

#[test]
fn identical_seeds_give_identical_traces() {
    let data = small_data(3);
    let cfg = TrainConfig { seed: 9, ..small_config() };
    let a = run(&data, &cfg);
    let b = run(&data, &cfg);
    assert_eq!(trace_to_csv(&a.records), trace_to_csv(&b.records));
    assert_eq!(a, b);
}

#[test]
fn zero_epochs_leave_an_empty_trace() {
    let data = small_data(4);
    let cfg = TrainConfig { epochs: 0, ..small_config() };
    let trace = run(&data, &cfg);
    assert!(trace.records.is_empty());
    assert!(trace.epoch_acc.is_empty());
    assert_eq!(trace.total_steps, 0);
    assert_eq!(trace.final_acc(), trace.initial_acc);
}

#[test]
fn measurement_cadence() {
    let data = small_data(5);
    let cfg = TrainConfig { epochs: 6, measure_window: 4, measure_every: 3, ..small_config() };
    let trace = run(&data, &cfg);
    let steps: Vec<usize> = trace.records.iter().map(|r| r.step).collect();
    let expected: Vec<usize> = (0..trace.total_steps).filter(|&s| s < 4 || s % 3 == 0).collect();
    assert_eq!(steps, expected);
    assert_eq!(trace.epoch_acc.len(), 6);
}

fn two_blobs() -> DatasetSplit {
    gen_synthetic(&SyntheticSpec {
        num_known: 2,
        num_novel: 0,
        per_class: 40,
        input_dim: 8,
        class_sep: 2.0,
        noise_std: 0.1,
        seed: 11,
    })
    .unwrap()
}

#[test]
fn reference_separates_two_blobs() {
    let data = two_blobs();
    let (_, summary) = train_reference(&data, &TrainConfig { feature_dim: 4, ..TrainConfig::default() }).unwrap();
    assert_eq!(summary.train_accuracy, 1.0);
    assert!(summary.final_loss.is_finite());
}

#[test]
fn reference_with_zero_learning_rate_keeps_initialization() {
    let data = two_blobs();
    let cfg = TrainConfig { feature_dim: 4, lr_encoder: 0.0, lr_head: 0.0, ..TrainConfig::default() };
    let (model, _) = train_reference(&data, &cfg).unwrap();
    assert_eq!(model, Model::init(8, 4, 2, cfg.seed).unwrap());
}

#[test]
fn reference_is_deterministic() {
    let data = two_blobs();
    let cfg = TrainConfig { feature_dim: 4, seed: 3, ..TrainConfig::default() };
    assert_eq!(train_reference(&data, &cfg).unwrap().0, train_reference(&data, &cfg).unwrap().0);
}

#[test]
fn reference_rejects_a_class_without_samples() {
    let mut data = two_blobs();
    data.labeled_y.iter_mut().for_each(|y| *y = 0);
    assert!(matches!(train_reference(&data, &TrainConfig::default()), Err(eagc::Error::Data(_))));
}

/// Model whose prototypes are the class means and whose encoder is the identity.
fn oracle_model(data: &DatasetSplit, means: &Matrix) -> Model {
    let d = data.input_dim();
    let mut prototypes = means.clone();
    eagc::simulator::normalize_rows(&mut prototypes);
    Model { encoder: Matrix::identity(d, d), prototypes }
}

fn noiseless() -> (DatasetSplit, Matrix) {
    let data = gen_synthetic(&SyntheticSpec {
        num_known: 2,
        num_novel: 2,
        per_class: 10,
        input_dim: 6,
        class_sep: 1.0,
        noise_std: 0.0,
        seed: 2,
    })
    .unwrap();
    let mut means = Matrix::zeros(4, 6);
    for (i, &y) in data.unlabeled_y.iter().enumerate() {
        means.set_row(y, &data.unlabeled_x.row(i));
    }
    (data, means)
}

#[test]
fn true_means_classify_perfectly() {
    let (data, means) = noiseless();
    let acc = evaluate(&oracle_model(&data, &means), &data).unwrap();
    assert_eq!(acc.all, 1.0);
    assert_eq!(acc.old, 1.0);
    assert_eq!(acc.new, 1.0);
}

#[test]
fn swapped_prototypes_do_not_change_accuracy() {
    let (data, means) = noiseless();
    let model = oracle_model(&data, &means);
    let mut swapped = model.clone();
    swapped.prototypes.swap_rows(0, 1);
    assert_eq!(evaluate(&model, &data).unwrap(), evaluate(&swapped, &data).unwrap());
}

#[test]
fn random_prototypes_reach_at_least_chance() {
    let data = gen_synthetic(&SyntheticSpec::benchmark(0)).unwrap();
    for seed in 0..5 {
        let model = Model::init(32, 16, 8, seed).unwrap();
        let acc = evaluate(&model, &data).unwrap();
        assert!(acc.all >= 1.0 / 8.0, "{acc:?}");
        let direct =
            hungarian_acc(&model.predict(&data.unlabeled_x), &data.unlabeled_y, &data.known_class_flags()).unwrap();
        assert_eq!(acc, direct);
    }
}

#[test]
fn non_finite_model_is_rejected() {
    let (data, means) = noiseless();
    let mut model = oracle_model(&data, &means);
    model.encoder[(0, 0)] = f64::NAN;
    assert!(matches!(evaluate(&model, &data), Err(eagc::Error::Numerical(_))));
}

#[test]
fn divergent_training_reports_partial_trace() {
    let data = small_data(6);
    let cfg = TrainConfig { lr_encoder: 1e200, lr_head: 1e200, cosine_decay: false, ..small_config() };
    let (reference, _) = train_reference(&data, &small_config()).unwrap();
    let abort = train_gcd(&data, &reference, &cfg).unwrap_err();
    assert!(matches!(abort.error, eagc::Error::Numerical(_) | eagc::Error::Degenerate(_)));
    assert!(!abort.partial.records.is_empty());
    assert!(abort.partial.records.iter().all(|r| r.step <= abort.step));
    assert_eq!(abort.partial.total_steps, abort.step);
}
