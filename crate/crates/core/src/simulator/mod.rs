//! Desk-scale category-discovery environment: synthetic data, a linear
//! encoder with a cosine prototype head, reference training, joint training
//! with gradient coordination hooks, and evaluation.

mod data;
mod model;
mod objective;
mod train;

pub use data::{gen_synthetic, DatasetSplit, SyntheticSpec};
pub use model::{normalize_rows, Model};
pub use objective::{evaluate_objective, sharpened_targets, supervised_loss, Batch, HeadParams, ObjectiveEval};
pub use train::{
    evaluate, gcd_step, joint_loss, make_batch, train_gcd, train_reference, EagcMode, KnownSubspace, ReferenceSummary,
    StepOutput, StepRecord, TrainAbort, TrainConfig, TrainTrace, WarmStart,
};
