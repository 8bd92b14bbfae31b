#![allow(dead_code)]

use eagc::numerics::{gaussian, Matrix, SeededRng};
use eagc::simulator::{
    gen_synthetic, make_batch, train_reference, Batch, DatasetSplit, KnownSubspace, Model, SyntheticSpec, TrainConfig,
};

pub fn small_data(seed: u64) -> DatasetSplit {
    gen_synthetic(&SyntheticSpec {
        num_known: 3,
        num_novel: 2,
        per_class: 12,
        input_dim: 6,
        class_sep: 1.0,
        noise_std: 0.2,
        seed,
    })
    .unwrap()
}

pub fn small_config() -> TrainConfig {
    TrainConfig { feature_dim: 4, batch_size: 8, epochs: 2, ..TrainConfig::default() }
}

pub struct Fixture {
    pub data: DatasetSplit,
    pub reference: Model,
    pub model: Model,
    pub subspace: KnownSubspace,
    pub batch: Batch,
}

/// A perturbed joint model, its reference and a two-view batch mixing labeled
/// and unlabeled samples.
pub fn fixture(seed: u64, samples: usize) -> Fixture {
    let data = small_data(seed);
    let cfg = small_config();
    let (reference, _) = train_reference(&data, &TrainConfig { seed, ..cfg }).unwrap();
    let mut model = Model::init(data.input_dim(), cfg.feature_dim, data.num_total, seed + 100).unwrap();
    let mut rng = SeededRng::new(seed + 200);
    model.encoder += gaussian(&mut rng, 0.0, 0.1, model.input_dim(), model.feature_dim()).unwrap();
    let subspace = KnownSubspace::build(&reference, &data, &cfg).unwrap();
    let pool = data.num_labeled() + data.num_unlabeled();
    // Half labeled, half unlabeled.
    let picks: Vec<usize> = (0..samples)
        .map(|i| {
            if i % 2 == 0 {
                rng.index(data.num_labeled())
            } else {
                data.num_labeled() + rng.index(pool - data.num_labeled())
            }
        })
        .collect();
    let batch = make_batch(&data, &picks, 0.1, &mut rng).unwrap();
    Fixture { data, reference, model, subspace, batch }
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax()
}

pub fn rel_err(analytic: &Matrix, numeric: &Matrix) -> f64 {
    (analytic - numeric).norm() / numeric.norm().max(1e-300)
}
