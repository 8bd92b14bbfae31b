use std::path::Path;

use eagc::io;
use eagc::metrics;
use eagc::numerics::Matrix;
use eagc::simulator::{gen_synthetic, train_gcd, train_reference, TrainTrace};
use eagc::subspace::{build_pca, build_pca_by_energy};
use eagc::theory::{lemma1_report, LinearSystemSpec};
use eagc::{Error, Result};

use crate::config::RunConfig;
use crate::report::{finite, Abort, DatasetSummary, Diagnostics, ReferenceReport, ReportBody, TrainSummary};

const DATA_KEYS: &[&str] = &["seed", "num_known", "num_novel", "per_class", "input_dim", "class_sep", "noise_std"];

const TRAIN_KEYS: &[&str] = &[
    "seed",
    "epochs",
    "batch_size",
    "lr_encoder",
    "lr_head",
    "cosine_decay",
    "feature_dim",
    "sharpen_temp",
    "entropy_weight",
    "view_noise_std",
    "eagc",
    "warm_start",
    "measure_every",
    "measure_window",
    "pca_energy",
    "lambda_a",
    "lambda_p",
    "eta",
    "tau_clamp",
    "alpha",
    "beta",
    "tau_s",
    "data",
    "model",
    "out_dir",
];

const REF_KEYS: &[&str] = &[
    "seed",
    "ref_epochs",
    "ref_lr_encoder",
    "ref_lr_head",
    "batch_size",
    "feature_dim",
    "tau_s",
    "data",
    "model",
    "out_dir",
];

const LEMMA_KEYS: &[&str] = &[
    "seed",
    "lambda_a",
    "lemma_dim",
    "lemma_h_min",
    "lemma_h_max",
    "lemma_noise",
    "lemma_step_size",
    "lemma_steps",
    "out_dir",
];

const METRICS_KEYS: &[&str] = &[
    "trace",
    "measure_window",
    "grad_sup",
    "grad",
    "proto_grad",
    "num_known",
    "labeled_features",
    "novel_features",
    "pca_k",
    "pca_energy",
];

/// Result of a subcommand: the report body, the keys it echoes and the file
/// the report is written to, if any.
pub struct Outcome {
    pub body: ReportBody,
    pub keys: &'static [&'static str],
    pub report_file: Option<&'static str>,
}

/// A failure after partial results were already reported.
pub struct Failed {
    pub error: Error,
    pub partial: Option<Box<Outcome>>,
}

impl From<Error> for Failed {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

pub fn gen_data(cfg: &RunConfig) -> Result<Outcome> {
    let spec = cfg.synthetic()?;
    let data = gen_synthetic(&spec)?;
    let path = cfg.data_path();
    io::write_string(&path, &io::dataset_to_string(&data))?;
    Ok(Outcome {
        body: ReportBody::Dataset(DatasetSummary {
            path: path.display().to_string(),
            labeled_rows: data.num_labeled(),
            unlabeled_rows: data.num_unlabeled(),
            unlabeled_known_rows: data.unlabeled_known.iter().filter(|&&k| k).count(),
            num_known: data.num_known,
            num_total: data.num_total,
        }),
        keys: DATA_KEYS,
        report_file: None,
    })
}

pub fn train_ref(cfg: &RunConfig) -> Result<Outcome> {
    let ref_cfg = cfg.reference()?;
    let data = io::dataset_from_str(&io::read_to_string(&cfg.data_path())?)?;
    let (model, summary) = train_reference(&data, &ref_cfg)?;
    let path = cfg.model_path();
    io::write_string(&path, &io::model_to_string(&model))?;
    Ok(Outcome {
        body: ReportBody::Reference(ReferenceReport::new(path.display().to_string(), &summary)),
        keys: REF_KEYS,
        report_file: Some("reference.json"),
    })
}

pub fn train(cfg: &RunConfig) -> std::result::Result<Outcome, Failed> {
    let train_cfg = cfg.train()?;
    let data = io::dataset_from_str(&io::read_to_string(&cfg.data_path())?)?;
    let reference = io::model_from_str(&io::read_to_string(&cfg.model_path())?)?;
    let trace_path = cfg.out_dir().join("trace.csv");
    let (trace, abort, error) = match train_gcd(&data, &reference, &train_cfg) {
        Ok(trace) => (trace, None, None),
        Err(a) => {
            let info = Abort { step: a.step, error: a.error.to_string() };
            (a.partial, Some(info), Some(a.error))
        }
    };
    io::write_string(&trace_path, &io::trace_to_csv(&trace.records))?;
    let outcome = Outcome {
        body: ReportBody::Train(TrainSummary::new(
            train_cfg.eagc.as_str(),
            trace_path.display().to_string(),
            &trace,
            train_cfg.measure_window,
            abort,
        )),
        keys: TRAIN_KEYS,
        report_file: Some("summary.json"),
    };
    match error {
        None => Ok(outcome),
        Some(error) => Err(Failed { error, partial: Some(Box::new(outcome)) }),
    }
}

/// Evenly spaced values from `lo` to `hi` inclusive.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn lemma_spec(cfg: &RunConfig) -> Result<LinearSystemSpec> {
    let dim: usize = cfg.parse("lemma_dim")?;
    if dim == 0 {
        return Err(Error::Argument("lemma_dim must be >= 1".into()));
    }
    let h = linspace(cfg.parse("lemma_h_min")?, cfg.parse("lemma_h_max")?, dim);
    let hessian = Matrix::from_diagonal(&eagc::numerics::Vector::from_vec(h));
    let noise: f64 = cfg.parse("lemma_noise")?;
    Ok(LinearSystemSpec::new(
        hessian,
        cfg.parse("lambda_a")?,
        cfg.parse("lemma_step_size")?,
        Matrix::identity(dim, dim) * noise,
        cfg.parse("lemma_steps")?,
        cfg.seed()?,
    ))
}

pub fn lemma1(cfg: &RunConfig) -> Result<Outcome> {
    let report = lemma1_report(&lemma_spec(cfg)?)?;
    Ok(Outcome { body: ReportBody::Lemma1(report), keys: LEMMA_KEYS, report_file: Some("lemma1.json") })
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    io::matrix_from_str(&io::read_to_string(path)?)
}

pub fn metrics(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Diagnostics::default();
    let mut any = false;
    if let Some(path) = cfg.optional_path("trace") {
        let window: usize = cfg.parse("measure_window")?;
        let trace = TrainTrace {
            records: io::trace_from_csv(&io::read_to_string(path)?)?,
            initial_acc: metrics::AccTriple { all: 0.0, old: 0.0, new: 0.0 },
            epoch_acc: Vec::new(),
            labeled_loss: Vec::new(),
            total_steps: 0,
            pca_k: 0,
            mean_labeled_energy: f64::NAN,
        };
        let means = trace
            .window_means(window)
            .ok_or_else(|| Error::Data(format!("trace has no records before step {window}")))?;
        out = Diagnostics::from(means);
        any = true;
    }
    match (cfg.optional_path("grad_sup"), cfg.optional_path("grad")) {
        (Some(a), Some(b)) => {
            let (g_sup, g) = (read_matrix(a)?, read_matrix(b)?);
            if g_sup.shape() != g.shape() {
                return Err(Error::Data(format!("gradient shapes {:?} and {:?} differ", g_sup.shape(), g.shape())));
            }
            out.gdc = finite(metrics::gdc(g_sup.as_slice(), g.as_slice())?);
            any = true;
        }
        (None, None) => {}
        _ => return Err(Error::Argument("gdc needs both --grad-sup and --grad".into())),
    }
    if let Some(path) = cfg.optional_path("proto_grad") {
        let g = read_matrix(path)?;
        let known_count: usize = cfg.parse("num_known")?;
        let norms: Vec<f64> = g.row_iter().map(|r| r.norm()).collect();
        let known: Vec<bool> = (0..norms.len()).map(|c| c < known_count).collect();
        out.rho_grad = finite(metrics::rho_grad(&norms, &known)?);
        any = true;
    }
    match (cfg.optional_path("labeled_features"), cfg.optional_path("novel_features")) {
        (Some(l), Some(n)) => {
            let (z_old, z_new) = (read_matrix(l)?, read_matrix(n)?);
            let p = match cfg.get("pca_k") {
                "" => build_pca_by_energy(&z_old, cfg.parse("pca_energy")?)?,
                _ => build_pca(&z_old, cfg.parse("pca_k")?)?,
            };
            out.soc = finite(metrics::soc(&z_new, &p)?);
            out.rho_in = finite(metrics::rho_in(&z_new, &p)?);
            any = true;
        }
        (None, None) => {}
        _ => return Err(Error::Argument("soc needs both --labeled-features and --novel-features".into())),
    }
    if !any {
        return Err(Error::Argument(
            "metrics needs --trace, --grad-sup/--grad, --proto-grad or --labeled-features/--novel-features".into(),
        ));
    }
    Ok(Outcome { body: ReportBody::Metrics(out), keys: METRICS_KEYS, report_file: None })
}
