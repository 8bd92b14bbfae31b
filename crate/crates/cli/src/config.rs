//! Run configuration: a flat key registry resolved from flags, a config file and defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use eagc::coordinator::CoordinatorConfig;
use eagc::io::format_f64;
use eagc::simulator::{SyntheticSpec, TrainConfig};
use eagc::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "EAGC_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "eagc-out";

pub struct Key {
    pub name: &'static str,
    pub default: String,
    pub help: &'static str,
}

impl Key {
    /// Command-line spelling, `--lr-encoder` for `lr_encoder`.
    pub fn flag(&self) -> String {
        self.name.replace('_', "-")
    }
}

fn key(name: &'static str, default: impl Into<String>, help: &'static str) -> Key {
    Key { name, default: default.into(), help }
}

/// Every recognised key with its default. Empty defaults mean "unset".
pub fn registry() -> Vec<Key> {
    let data = SyntheticSpec::benchmark(0);
    let train = TrainConfig::default();
    let reference = TrainConfig::reference_default();
    let coord = CoordinatorConfig::default();
    let f = format_f64;
    vec![
        key("seed", "0", "seed for data generation, initialization, shuffling and lemma1 noise"),
        key("num_known", data.num_known.to_string(), "number of known classes"),
        key("num_novel", data.num_novel.to_string(), "number of novel classes"),
        key("per_class", data.per_class.to_string(), "samples per class"),
        key("input_dim", data.input_dim.to_string(), "input dimension"),
        key("class_sep", f(data.class_sep), "distance scale between class means"),
        key("noise_std", f(data.noise_std), "within-class noise standard deviation"),
        key("epochs", train.epochs.to_string(), "joint training epochs"),
        key("batch_size", train.batch_size.to_string(), "minibatch size"),
        key("lr_encoder", f(train.lr_encoder), "encoder learning rate"),
        key("lr_head", f(train.lr_head), "prototype learning rate"),
        key("cosine_decay", train.cosine_decay.to_string(), "cosine learning-rate decay (true|false)"),
        key("feature_dim", train.feature_dim.to_string(), "feature dimension"),
        key("sharpen_temp", f(train.sharpen_temp), "temperature of the sharpened self-distillation targets"),
        key("entropy_weight", f(train.entropy_weight), "weight of the mean-entropy regularizer"),
        key("view_noise_std", f(train.view_noise_std), "noise added to form the two views"),
        key("eagc", train.eagc.as_str(), "on|off|loss-variant|uniform-proj"),
        key("warm_start", train.warm_start.as_str(), "none|encoder|full"),
        key("measure_every", train.measure_every.to_string(), "diagnostic cadence after the measurement window"),
        key("measure_window", train.measure_window.to_string(), "steps measured at every step and averaged in reports"),
        key("pca_energy", f(train.pca_energy), "energy fraction defining the known-class PCA rank"),
        key("ref_epochs", reference.epochs.to_string(), "reference training epochs"),
        key("ref_lr_encoder", f(reference.lr_encoder), "reference encoder learning rate"),
        key("ref_lr_head", f(reference.lr_head), "reference prototype learning rate"),
        key("lambda_a", f(coord.lambda_a), "anchor alignment strength"),
        key("lambda_p", f(coord.lambda_p), "elastic projection strength"),
        key("eta", f(coord.eta), "conceptor aperture"),
        key("tau_clamp", coord.tau_clamp.as_str(), "clamp_zero_one|clamp_zero_only|unclamped"),
        key("alpha", f(coord.alpha), "supervised loss weight"),
        key("beta", f(coord.beta), "unsupervised loss weight"),
        key("tau_s", f(coord.tau_s), "classifier softmax temperature"),
        key("lemma_dim", "4", "dimension of the linear deviation model"),
        key("lemma_h_min", "0.5", "smallest Hessian eigenvalue"),
        key("lemma_h_max", "2", "largest Hessian eigenvalue"),
        key("lemma_noise", "1", "gradient noise variance"),
        key("lemma_step_size", "0.01", "SGD step size of the deviation model"),
        key("lemma_steps", "200000", "simulated steps"),
        key("out_dir", "", "output directory (default: $EAGC_OUT_DIR, else eagc-out)"),
        key("data", "", "dataset file (default: <out_dir>/dataset.txt)"),
        key("model", "", "reference model file (default: <out_dir>/reference.txt)"),
        key("trace", "", "metrics: step trace CSV"),
        key("grad_sup", "", "metrics: supervised gradient matrix"),
        key("grad", "", "metrics: joint gradient matrix"),
        key("proto_grad", "", "metrics: per-class prototype gradient matrix, known classes first"),
        key("labeled_features", "", "metrics: labeled feature matrix spanning the known subspace"),
        key("novel_features", "", "metrics: novel feature matrix"),
        key("pca_k", "", "metrics: fixed PCA rank (default: pca_energy rule)"),
    ]
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Argument(format!("config line {}: expected key = value", i + 1)));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Argument(format!("config line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Fully resolved key values.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Applies defaults, then file entries, then flags. Unknown keys in either layer are errors.
    pub fn resolve(file: &[(String, String)], flags: &[(String, String)]) -> Result<Self> {
        let mut values: BTreeMap<String, String> =
            registry().into_iter().map(|k| (k.name.to_string(), k.default)).collect();
        for (k, v) in file.iter().chain(flags) {
            match values.get_mut(k.as_str()) {
                Some(slot) => *slot = v.clone(),
                None => return Err(Error::Argument(format!("unknown config key '{k}'"))),
            }
        }
        if values["out_dir"].is_empty() {
            let dir = std::env::var(OUT_DIR_ENV).ok().filter(|s| !s.is_empty());
            values.insert("out_dir".into(), dir.unwrap_or_else(|| FALLBACK_OUT_DIR.into()));
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key);
        raw.parse().map_err(|e| Error::Argument(format!("{key} = '{raw}': {e}")))
    }

    fn parse_enum<T: FromStr<Err = Error>>(&self, key: &str) -> Result<T> {
        self.get(key).parse()
    }

    /// Keys relevant to a subcommand, for the report echo.
    pub fn echo(&self, keys: &[&str]) -> BTreeMap<String, String> {
        keys.iter().map(|k| (k.to_string(), self.get(k).to_string())).collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out_dir"))
    }

    fn path_or(&self, key: &str, file: &str) -> PathBuf {
        match self.get(key) {
            "" => self.out_dir().join(file),
            p => PathBuf::from(p),
        }
    }

    pub fn data_path(&self) -> PathBuf {
        self.path_or("data", "dataset.txt")
    }

    pub fn model_path(&self) -> PathBuf {
        self.path_or("model", "reference.txt")
    }

    pub fn optional_path(&self, key: &str) -> Option<&Path> {
        match self.get(key) {
            "" => None,
            p => Some(Path::new(p)),
        }
    }

    pub fn synthetic(&self) -> Result<SyntheticSpec> {
        Ok(SyntheticSpec {
            num_known: self.parse("num_known")?,
            num_novel: self.parse("num_novel")?,
            per_class: self.parse("per_class")?,
            input_dim: self.parse("input_dim")?,
            class_sep: self.parse("class_sep")?,
            noise_std: self.parse("noise_std")?,
            seed: self.seed()?,
        })
    }

    pub fn coordinator(&self) -> Result<CoordinatorConfig> {
        Ok(CoordinatorConfig {
            lambda_a: self.parse("lambda_a")?,
            lambda_p: self.parse("lambda_p")?,
            eta: self.parse("eta")?,
            tau_clamp: self.parse_enum("tau_clamp")?,
            alpha: self.parse("alpha")?,
            beta: self.parse("beta")?,
            tau_s: self.parse("tau_s")?,
            ..CoordinatorConfig::default()
        })
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.parse("epochs")?,
            batch_size: self.parse("batch_size")?,
            lr_encoder: self.parse("lr_encoder")?,
            lr_head: self.parse("lr_head")?,
            cosine_decay: self.parse("cosine_decay")?,
            seed: self.seed()?,
            feature_dim: self.parse("feature_dim")?,
            sharpen_temp: self.parse("sharpen_temp")?,
            entropy_weight: self.parse("entropy_weight")?,
            view_noise_std: self.parse("view_noise_std")?,
            coordinator: self.coordinator()?,
            eagc: self.parse_enum("eagc")?,
            warm_start: self.parse_enum("warm_start")?,
            measure_every: self.parse("measure_every")?,
            measure_window: self.parse("measure_window")?,
            pca_energy: self.parse("pca_energy")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Supervised-only schedule sharing the head and feature settings of `train()`.
    pub fn reference(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.parse("ref_epochs")?,
            lr_encoder: self.parse("ref_lr_encoder")?,
            lr_head: self.parse("ref_lr_head")?,
            ..self.train()?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
