//! JSON reports written by every subcommand.

use std::collections::BTreeMap;

use eagc::metrics::{AccTriple, GeReport};
use eagc::simulator::{ReferenceSummary, TrainTrace};
use eagc::theory::CovarianceReport;
use serde::{Deserialize, Serialize};

/// Report field holding elapsed time; excluded from idempotence comparisons.
pub const WALL_CLOCK_FIELD: &str = "wall_clock_seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub result: ReportBody,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReportBody {
    Dataset(DatasetSummary),
    Reference(ReferenceReport),
    Train(TrainSummary),
    Lemma1(CovarianceReport),
    Metrics(Diagnostics),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub path: String,
    pub labeled_rows: usize,
    pub unlabeled_rows: usize,
    pub unlabeled_known_rows: usize,
    pub num_known: usize,
    pub num_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub path: String,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub steps: usize,
}

impl ReferenceReport {
    pub fn new(path: String, s: &ReferenceSummary) -> Self {
        Self { path, final_loss: s.final_loss, train_accuracy: s.train_accuracy, steps: s.steps }
    }
}

/// Entanglement diagnostics. Undefined values (NaN) are stored as `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub step: Option<usize>,
    pub gdc: Option<f64>,
    pub soc: Option<f64>,
    pub rho_grad: Option<f64>,
    pub rho_in: Option<f64>,
}

pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl From<GeReport> for Diagnostics {
    fn from(r: GeReport) -> Self {
        Self {
            step: Some(r.step),
            gdc: finite(r.gdc),
            soc: finite(r.soc),
            rho_grad: finite(r.rho_grad),
            rho_in: finite(r.rho_in),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub step: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub eagc: String,
    pub trace_path: String,
    pub total_steps: usize,
    pub pca_k: usize,
    pub mean_labeled_energy: Option<f64>,
    pub initial_acc: AccTriple,
    pub final_acc: AccTriple,
    pub best_acc: AccTriple,
    pub epoch_acc: Vec<AccTriple>,
    pub labeled_loss: Vec<Option<f64>>,
    /// Means over the measurement window.
    pub entanglement: Option<Diagnostics>,
    pub aborted: Option<Abort>,
}

impl TrainSummary {
    pub fn new(eagc: &str, trace_path: String, trace: &TrainTrace, window: usize, aborted: Option<Abort>) -> Self {
        Self {
            eagc: eagc.to_string(),
            trace_path,
            total_steps: trace.total_steps,
            pca_k: trace.pca_k,
            mean_labeled_energy: finite(trace.mean_labeled_energy),
            initial_acc: trace.initial_acc,
            final_acc: trace.final_acc(),
            best_acc: trace.best_acc(),
            epoch_acc: trace.epoch_acc.clone(),
            labeled_loss: trace.labeled_loss.iter().map(|&v| finite(v)).collect(),
            entanglement: trace.window_means(window).map(Diagnostics::from),
            aborted,
        }
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_lossless() {
        let acc = AccTriple { all: 0.1 + 0.2, old: 1.0 / 3.0, new: 2.0f64.sqrt() };
        let report = Report {
            command: "train".into(),
            seed: u64::MAX,
            config: BTreeMap::from([("eta".into(), "2".into())]),
            result: ReportBody::Train(TrainSummary {
                eagc: "on".into(),
                trace_path: "t.csv".into(),
                total_steps: 7,
                pca_k: 2,
                mean_labeled_energy: Some(std::f64::consts::PI),
                initial_acc: acc,
                final_acc: acc,
                best_acc: acc,
                epoch_acc: vec![acc; 3],
                labeled_loss: vec![Some(1e-300), None, Some(-0.0)],
                entanglement: Some(Diagnostics {
                    step: Some(200),
                    gdc: Some(0.123_456_789_012_345_68),
                    ..Default::default()
                }),
                aborted: Some(Abort { step: 3, error: "x".into() }),
            }),
            wall_clock_seconds: 1.2345e-7,
        };
        let back = Report::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json(), report.to_json());
    }
}
