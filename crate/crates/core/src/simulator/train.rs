use serde::{Deserialize, Serialize};

use crate::coordinator::{
    coordinate, proximal_loss, BatchMask, CoordinatorConfig, GradientAdjustment, ProjectionWeighting,
};
use crate::error::{Error, Result};
use crate::metrics::{self, AccTriple, GeReport};
use crate::numerics::{gaussian, select_rows, Matrix, SeededRng};
use crate::subspace::{
    build_conceptor, build_pca_by_energy, labeled_energy_stats, Conceptor, EnergyStats, PcaProjector,
};

use super::data::DatasetSplit;
use super::model::{normalize_rows, Model};
use super::objective::{evaluate_objective, sharpened_targets, supervised_loss, Batch, HeadParams};

/// Which gradient coordination runs during joint training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EagcMode {
    Off,
    /// Alignment hook on labeled rows and energy-adaptive projection on unlabeled rows.
    #[default]
    On,
    /// Alignment replaced by the explicit proximal penalty in the loss.
    LossVariant,
    /// Projection with `tau = 1` for every unlabeled row.
    UniformProj,
}

impl EagcMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EagcMode::Off => "off",
            EagcMode::On => "on",
            EagcMode::LossVariant => "loss-variant",
            EagcMode::UniformProj => "uniform-proj",
        }
    }

    pub fn enabled(self) -> bool {
        self != EagcMode::Off
    }
}

impl std::str::FromStr for EagcMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(EagcMode::Off),
            "on" => Ok(EagcMode::On),
            "loss-variant" => Ok(EagcMode::LossVariant),
            "uniform-proj" => Ok(EagcMode::UniformProj),
            other => Err(Error::Argument(format!(
                "unknown eagc mode '{other}' (expected on, off, loss-variant or uniform-proj)"
            ))),
        }
    }
}

/// How the joint model is initialized relative to the frozen reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStart {
    /// Seeded random encoder and prototypes.
    None,
    /// Encoder copied from the reference; prototypes random.
    Encoder,
    /// Encoder and known-class prototypes copied; novel prototypes random.
    #[default]
    Full,
}

impl WarmStart {
    pub fn as_str(self) -> &'static str {
        match self {
            WarmStart::None => "none",
            WarmStart::Encoder => "encoder",
            WarmStart::Full => "full",
        }
    }
}

impl std::str::FromStr for WarmStart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WarmStart::None),
            "encoder" => Ok(WarmStart::Encoder),
            "full" => Ok(WarmStart::Full),
            other => Err(Error::Argument(format!("unknown warm start '{other}' (expected none, encoder or full)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_encoder: f64,
    pub lr_head: f64,
    pub cosine_decay: bool,
    pub seed: u64,
    pub feature_dim: usize,
    pub sharpen_temp: f64,
    pub entropy_weight: f64,
    /// Gaussian noise added to each of the two augmented views.
    pub view_noise_std: f64,
    pub coordinator: CoordinatorConfig,
    pub eagc: EagcMode,
    pub warm_start: WarmStart,
    /// Diagnostics are recorded every step inside the window, then every `measure_every` steps.
    pub measure_every: usize,
    pub measure_window: usize,
    /// Energy fraction that fixes the PCA rank used for the overlap metrics.
    pub pca_energy: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr_encoder: 0.1,
            lr_head: 1.0,
            cosine_decay: true,
            seed: 0,
            feature_dim: 16,
            sharpen_temp: 0.05,
            entropy_weight: 1.0,
            view_noise_std: 0.1,
            coordinator: CoordinatorConfig::default(),
            eagc: EagcMode::On,
            warm_start: WarmStart::Full,
            measure_every: 10,
            measure_window: metrics::ENTANGLEMENT_WINDOW,
            pca_energy: crate::subspace::DEFAULT_PCA_ENERGY,
        }
    }
}

impl TrainConfig {
    /// Schedule used for the frozen reference model: same as the joint
    /// default but with a small learning rate on both parameter groups.
    pub fn reference_default() -> Self {
        Self { epochs: 100, lr_encoder: 0.02, lr_head: 0.02, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.coordinator.validate()?;
        if self.batch_size == 0 || self.feature_dim == 0 || self.measure_every == 0 {
            return Err(Error::Argument("batch_size, feature_dim and measure_every must be >= 1".into()));
        }
        for (name, v) in [("lr_encoder", self.lr_encoder), ("lr_head", self.lr_head)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Argument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.sharpen_temp > 0.0) {
            return Err(Error::Argument(format!("sharpen_temp must be positive, got {}", self.sharpen_temp)));
        }
        if !(self.entropy_weight >= 0.0) || !(self.view_noise_std >= 0.0) {
            return Err(Error::Argument("entropy_weight and view_noise_std must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.pca_energy) {
            return Err(Error::Argument(format!("pca_energy must lie in [0, 1], got {}", self.pca_energy)));
        }
        Ok(())
    }

    pub fn head(&self) -> HeadParams {
        HeadParams {
            tau_s: self.coordinator.tau_s,
            sharpen_temp: self.sharpen_temp,
            entropy_weight: self.entropy_weight,
        }
    }

    fn learning_rates(&self, step: usize, total: usize) -> (f64, f64) {
        let factor = if self.cosine_decay && total > 0 {
            0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
        } else {
            1.0
        };
        (self.lr_encoder * factor, self.lr_head * factor)
    }

    fn is_measured(&self, step: usize) -> bool {
        step < self.measure_window || step.is_multiple_of(self.measure_every)
    }
}

// Stream tags keep initialization, batching and augmentation independent.
const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn stream(seed: u64, tag: u64) -> SeededRng {
    SeededRng::new(seed ^ tag)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub steps: usize,
}

/// Supervised training on the labeled split only, with one prototype per known class.
pub fn train_reference(data: &DatasetSplit, cfg: &TrainConfig) -> Result<(Model, ReferenceSummary)> {
    cfg.validate()?;
    data.validate()?;
    if data.num_labeled() == 0 {
        return Err(Error::Data("labeled split is empty".into()));
    }
    for class in 0..data.num_known {
        if !data.labeled_y.contains(&class) {
            return Err(Error::Data(format!("known class {class} has no labeled samples")));
        }
    }
    let mut model = Model::init(data.input_dim(), cfg.feature_dim, data.num_known, cfg.seed ^ INIT_STREAM)?;
    let mut rng = stream(cfg.seed, SHUFFLE_STREAM);
    let head = cfg.head();
    let n = data.num_labeled();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let x = select_rows(&data.labeled_x, chunk);
            let batch = Batch {
                inputs: x,
                mask: BatchMask::new(vec![true; chunk.len()]),
                labels: chunk.iter().map(|&i| Some(data.labeled_y[i])).collect(),
                pairs: 0,
            };
            let features = model.features(&batch.inputs);
            let dummy_targets = Matrix::zeros(batch.rows(), model.num_classes());
            let eval = evaluate_objective(&features, &model.prototypes, &batch, &head, &dummy_targets)?;
            if !eval.loss_sup.is_finite() {
                return Err(Error::Numerical(format!("non-finite reference loss at step {step}")));
            }
            let (lr_enc, lr_head) = cfg.learning_rates(step, total);
            let grad_w = batch.inputs.transpose() * &eval.feat_grad_sup;
            apply_update(&mut model, &grad_w, &eval.proto_grad_sup, lr_enc, lr_head);
            step += 1;
        }
    }

    let (final_loss, train_accuracy) =
        supervised_loss(&model.features(&data.labeled_x), &model.prototypes, &data.labeled_y, head.tau_s)?;
    Ok((model, ReferenceSummary { final_loss, train_accuracy, steps: step }))
}

fn apply_update(model: &mut Model, grad_w: &Matrix, grad_c: &Matrix, lr_enc: f64, lr_head: f64) {
    if lr_enc != 0.0 {
        model.encoder -= grad_w * lr_enc;
    }
    if lr_head != 0.0 {
        model.prototypes -= grad_c * lr_head;
        normalize_rows(&mut model.prototypes);
    }
}

/// Quantities built once from the frozen reference model before joint training.
#[derive(Debug, Clone)]
pub struct KnownSubspace {
    pub conceptor: Conceptor,
    pub stats: EnergyStats,
    pub pca: PcaProjector,
}

impl KnownSubspace {
    pub fn build(ref_model: &Model, data: &DatasetSplit, cfg: &TrainConfig) -> Result<Self> {
        let z_old = ref_model.features(&data.labeled_x);
        let conceptor = build_conceptor(&z_old, cfg.coordinator.eta)?;
        let stats = labeled_energy_stats(&z_old, &conceptor)?;
        let pca = build_pca_by_energy(&z_old, cfg.pca_energy)?;
        Ok(Self { conceptor, stats, pca })
    }
}

/// Everything one joint step computes before the parameters move.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss_sup: f64,
    pub loss_unsup: f64,
    /// Explicit proximal penalty (loss variant only, otherwise 0).
    pub loss_prox: f64,
    pub features: Matrix,
    pub ref_features: Matrix,
    pub feature_grads_before: Matrix,
    pub feature_grads_after: Matrix,
    pub adjustment: Option<GradientAdjustment>,
    /// Encoder gradient actually applied.
    pub grad_encoder: Matrix,
    pub grad_prototypes: Matrix,
    /// Gradient of the weighted supervised loss alone (beta = 0, no coordination).
    pub grad_encoder_sup: Matrix,
    pub grad_prototypes_sup: Matrix,
}

impl StepOutput {
    pub fn flat_gradient(&self) -> Vec<f64> {
        self.grad_encoder.iter().chain(self.grad_prototypes.iter()).copied().collect()
    }

    pub fn flat_sup_gradient(&self) -> Vec<f64> {
        self.grad_encoder_sup.iter().chain(self.grad_prototypes_sup.iter()).copied().collect()
    }
}

/// Joint loss, coordinated feature gradients and parameter gradients for one batch.
pub fn gcd_step(
    model: &Model,
    batch: &Batch,
    ref_model: &Model,
    subspace: &KnownSubspace,
    cfg: &TrainConfig,
) -> Result<StepOutput> {
    batch.validate()?;
    let head = cfg.head();
    let coord = &cfg.coordinator;
    let features = model.features(&batch.inputs);
    let ref_features = ref_model.features(&batch.inputs);
    let targets = sharpened_targets(&features, &model.prototypes, head.sharpen_temp)?;
    let eval = evaluate_objective(&features, &model.prototypes, batch, &head, &targets)?;
    if !eval.loss_sup.is_finite() || !eval.loss_unsup.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss (sup {}, unsup {})", eval.loss_sup, eval.loss_unsup)));
    }

    let sup_part = &eval.feat_grad_sup * coord.alpha;
    let mut feature_grads_before = &sup_part + &eval.feat_grad_unsup * coord.beta;

    let mut loss_prox = 0.0;
    if cfg.eagc == EagcMode::LossVariant {
        let labeled = batch.mask.labeled_rows();
        let z_l = select_rows(&features, &labeled);
        let z_hat = select_rows(&ref_features, &labeled);
        let (loss, grad) = proximal_loss(&z_l, &z_hat, coord.lambda_a)?;
        loss_prox = loss;
        for (k, &r) in labeled.iter().enumerate() {
            let row = feature_grads_before.row(r) + grad.row(k);
            feature_grads_before.set_row(r, &row);
        }
    }

    let (feature_grads_after, adjustment) = match cfg.eagc {
        EagcMode::Off => (feature_grads_before.clone(), None),
        mode => {
            let mut c = *coord;
            if mode == EagcMode::LossVariant {
                c.lambda_a = 0.0;
            }
            if mode == EagcMode::UniformProj {
                c.weighting = ProjectionWeighting::Uniform;
            }
            let (after, adj) = coordinate(
                &feature_grads_before,
                &features,
                &ref_features,
                &batch.mask,
                &subspace.conceptor,
                &subspace.stats,
                &c,
            )?;
            (after, Some(adj))
        }
    };

    let xt = batch.inputs.transpose();
    let grad_encoder = &xt * &feature_grads_after;
    let grad_prototypes = &eval.proto_grad_sup * coord.alpha + &eval.proto_grad_unsup * coord.beta;
    let grad_encoder_sup = &xt * &sup_part;
    let grad_prototypes_sup = &eval.proto_grad_sup * coord.alpha;

    Ok(StepOutput {
        loss_sup: eval.loss_sup,
        loss_unsup: eval.loss_unsup,
        loss_prox,
        features,
        ref_features,
        feature_grads_before,
        feature_grads_after,
        adjustment,
        grad_encoder,
        grad_prototypes,
        grad_encoder_sup,
        grad_prototypes_sup,
    })
}

/// `alpha L_sup + beta L_unsup` at the model's parameters with fixed targets.
pub fn joint_loss(model: &Model, batch: &Batch, targets: &Matrix, cfg: &TrainConfig) -> Result<f64> {
    let features = model.features(&batch.inputs);
    let eval = evaluate_objective(&features, &model.prototypes, batch, &cfg.head(), targets)?;
    Ok(cfg.coordinator.alpha * eval.loss_sup + cfg.coordinator.beta * eval.loss_unsup)
}

/// Builds a two-view batch from sample indices into the pooled
/// `labeled ++ unlabeled` sample list.
pub fn make_batch(data: &DatasetSplit, samples: &[usize], noise_std: f64, rng: &mut SeededRng) -> Result<Batch> {
    let nl = data.num_labeled();
    let d = data.input_dim();
    let b = samples.len();
    let mut inputs = Matrix::zeros(2 * b, d);
    let mut labels = Vec::with_capacity(2 * b);
    let mut flags = Vec::with_capacity(2 * b);
    for view in 0..2 {
        let noise = gaussian(rng, 0.0, noise_std, b, d)?;
        for (i, &s) in samples.iter().enumerate() {
            let (source, label) = if s < nl {
                (data.labeled_x.row(s), Some(data.labeled_y[s]))
            } else {
                (data.unlabeled_x.row(s - nl), None)
            };
            let row = source + noise.row(i);
            inputs.set_row(view * b + i, &row);
            labels.push(label);
            flags.push(label.is_some());
        }
    }
    Ok(Batch { inputs, mask: BatchMask::new(flags), labels, pairs: b })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss_sup: f64,
    pub loss_unsup: f64,
    pub gdc: f64,
    pub soc: f64,
    pub rho_grad: f64,
    pub rho_in: f64,
}

impl StepRecord {
    pub fn ge_report(&self) -> GeReport {
        GeReport { step: self.step, gdc: self.gdc, soc: self.soc, rho_grad: self.rho_grad, rho_in: self.rho_in }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<StepRecord>,
    pub initial_acc: AccTriple,
    /// One entry per completed epoch.
    pub epoch_acc: Vec<AccTriple>,
    /// Clean labeled cross-entropy before each epoch and after the last one.
    pub labeled_loss: Vec<f64>,
    pub total_steps: usize,
    pub pca_k: usize,
    pub mean_labeled_energy: f64,
}

impl TrainTrace {
    pub fn final_acc(&self) -> AccTriple {
        self.epoch_acc.last().copied().unwrap_or(self.initial_acc)
    }

    pub fn best_acc(&self) -> AccTriple {
        self.epoch_acc.iter().copied().fold(self.initial_acc, |best, a| if a.all > best.all { a } else { best })
    }

    /// Mean diagnostics over the first `window` steps; NaN entries are skipped.
    pub fn window_means(&self, window: usize) -> Option<GeReport> {
        let inside: Vec<&StepRecord> = self.records.iter().filter(|r| r.step < window).collect();
        if inside.is_empty() {
            return None;
        }
        let mean = |f: fn(&StepRecord) -> f64| {
            let vals: Vec<f64> = inside.iter().map(|r| f(r)).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        Some(GeReport {
            step: window,
            gdc: mean(|r| r.gdc),
            soc: mean(|r| r.soc),
            rho_grad: mean(|r| r.rho_grad),
            rho_in: mean(|r| r.rho_in),
        })
    }
}

/// Joint training stopped early; `partial` holds everything recorded so far.
#[derive(Debug, Clone)]
pub struct TrainAbort {
    pub error: Error,
    pub step: usize,
    pub partial: TrainTrace,
}

impl std::fmt::Display for TrainAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training aborted at step {}: {}", self.step, self.error)
    }
}

impl std::error::Error for TrainAbort {}

/// Hungarian-matched accuracy of argmax-prototype assignments on the unlabeled split.
pub fn evaluate(model: &Model, data: &DatasetSplit) -> Result<AccTriple> {
    model.check_compatible(data.input_dim())?;
    if !model.is_finite() {
        return Err(Error::Numerical("model has non-finite parameters".into()));
    }
    let pred = model.predict(&data.unlabeled_x);
    metrics::hungarian_acc(&pred, &data.unlabeled_y, &data.known_class_flags())
}

fn diagnostics(
    out: &StepOutput,
    model: &Model,
    data: &DatasetSplit,
    novel_rows: &[usize],
    subspace: &KnownSubspace,
) -> (f64, f64, f64, f64) {
    let gdc = metrics::gdc(&out.flat_sup_gradient(), &out.flat_gradient()).unwrap_or(f64::NAN);
    let (soc, rho_in) = if novel_rows.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let z_new = model.features(&select_rows(&data.unlabeled_x, novel_rows));
        (
            metrics::soc(&z_new, &subspace.pca).unwrap_or(f64::NAN),
            metrics::rho_in(&z_new, &subspace.pca).unwrap_or(f64::NAN),
        )
    };
    let norms: Vec<f64> = out.grad_prototypes.row_iter().map(|r| r.norm()).collect();
    let rho_grad = metrics::rho_grad(&norms, &data.known_class_flags()).unwrap_or(f64::NAN);
    (gdc, soc, rho_grad, rho_in)
}

/// Full joint training schedule with periodic diagnostics and per-epoch evaluation.
#[allow(clippy::result_large_err)]
pub fn train_gcd(
    data: &DatasetSplit,
    ref_model: &Model,
    cfg: &TrainConfig,
) -> std::result::Result<TrainTrace, TrainAbort> {
    let empty = TrainTrace {
        records: Vec::new(),
        initial_acc: AccTriple { all: 0.0, old: 0.0, new: 0.0 },
        epoch_acc: Vec::new(),
        labeled_loss: Vec::new(),
        total_steps: 0,
        pca_k: 0,
        mean_labeled_energy: f64::NAN,
    };
    let abort = |error: Error, step: usize, partial: TrainTrace| TrainAbort { error, step, partial };

    let setup = (|| -> Result<(Model, KnownSubspace, AccTriple, f64)> {
        cfg.validate()?;
        data.validate()?;
        ref_model.check_compatible(data.input_dim())?;
        if ref_model.feature_dim() != cfg.feature_dim {
            return Err(Error::Data(format!(
                "reference model has {} features, config asks for {}",
                ref_model.feature_dim(),
                cfg.feature_dim
            )));
        }
        let mut model = Model::init(data.input_dim(), cfg.feature_dim, data.num_total, cfg.seed ^ INIT_STREAM)?;
        if cfg.warm_start != WarmStart::None {
            model.encoder.copy_from(&ref_model.encoder);
        }
        if cfg.warm_start == WarmStart::Full {
            let known = ref_model.num_classes().min(model.num_classes());
            model.prototypes.rows_mut(0, known).copy_from(&ref_model.prototypes.rows(0, known));
        }
        let subspace = KnownSubspace::build(ref_model, data, cfg)?;
        let acc = evaluate(&model, data)?;
        let (loss, _) = supervised_loss(
            &model.features(&data.labeled_x),
            &model.prototypes,
            &data.labeled_y,
            cfg.coordinator.tau_s,
        )?;
        Ok((model, subspace, acc, loss))
    })();
    let (mut model, subspace, initial_acc, initial_loss) = setup.map_err(|e| abort(e, 0, empty.clone()))?;

    let mut trace = TrainTrace {
        initial_acc,
        labeled_loss: vec![initial_loss],
        pca_k: subspace.pca.k(),
        mean_labeled_energy: subspace.stats.mean_labeled_energy,
        ..empty
    };

    let pool = data.num_labeled() + data.num_unlabeled();
    let per_epoch = pool.div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let novel_rows = data.novel_unlabeled_rows();
    let mut rng = stream(cfg.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..pool).collect();
    let mut step = 0usize;

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let result = (|| -> Result<()> {
                let batch = make_batch(data, chunk, cfg.view_noise_std, &mut rng)?;
                let out = gcd_step(&model, &batch, ref_model, &subspace, cfg)?;
                if cfg.is_measured(step) {
                    let (gdc, soc, rho_grad, rho_in) = diagnostics(&out, &model, data, &novel_rows, &subspace);
                    trace.records.push(StepRecord {
                        step,
                        loss_sup: out.loss_sup,
                        loss_unsup: out.loss_unsup,
                        gdc,
                        soc,
                        rho_grad,
                        rho_in,
                    });
                }
                let (lr_enc, lr_head) = cfg.learning_rates(step, total);
                apply_update(&mut model, &out.grad_encoder, &out.grad_prototypes, lr_enc, lr_head);
                if !model.is_finite() {
                    return Err(Error::Numerical("parameters became non-finite".into()));
                }
                Ok(())
            })();
            if let Err(e) = result {
                trace.total_steps = step;
                return Err(abort(e, step, trace));
            }
            step += 1;
        }
        let epoch_end = (|| -> Result<(AccTriple, f64)> {
            let acc = evaluate(&model, data)?;
            let (loss, _) = supervised_loss(
                &model.features(&data.labeled_x),
                &model.prototypes,
                &data.labeled_y,
                cfg.coordinator.tau_s,
            )?;
            Ok((acc, loss))
        })();
        match epoch_end {
            Ok((acc, loss)) => {
                trace.epoch_acc.push(acc);
                trace.labeled_loss.push(loss);
            }
            Err(e) => {
                trace.total_steps = step;
                return Err(abort(e, step, trace));
            }
        }
    }
    trace.total_steps = step;
    Ok(trace)
}
