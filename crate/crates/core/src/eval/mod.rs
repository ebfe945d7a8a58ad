//! Accuracy, the adaptive unlearning score, membership inference and
//! aggregation over runs.

mod mia;
mod svm;

pub use mia::{
    f1_score, mia_chance, mia_cr, mia_hr, mia_on_outputs, micro_f1, MiaResult, CR_MEMBER_RATIO, MIA_FOLDS,
    MIA_ITERATIONS, MIA_TEST_FRACTION,
};
pub use svm::{fit_kernel_svm, grid_search_svm, Gamma, GridChoice, KernelSvm, C_GRID, GAMMA_GRID, KKT_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Scenario, ScenarioSplit, TestSplit};
use crate::error::{Error, Result};
use crate::nn::{Model, Tensor};

/// Fraction of argmax-correct predictions.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    accuracy_on(model, data.inputs(), data.labels())
}

pub fn accuracy_on(model: &Model, inputs: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::param("accuracy of an empty dataset"));
    }
    let pred = model.predict(inputs)?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Adaptive unlearning score `(1 − (a_or − a_t)) / (1 + Δ)` where `Δ` is the
/// forget accuracy in CR and `|a_t − a_f|` in HR. All inputs are fractions.
pub fn aus(a_or: f64, a_t: f64, a_f: f64, scenario: Scenario) -> Result<f64> {
    for (name, v) in [("original", a_or), ("test", a_t), ("forget", a_f)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(format!("{name} accuracy {v} is not a fraction")));
        }
    }
    let delta = match scenario {
        Scenario::Cr => a_f,
        Scenario::Hr => (a_t - a_f).abs(),
    };
    Ok((1.0 - (a_or - a_t)) / (1.0 + delta))
}

/// `test` is the retain-test accuracy in CR and the full test accuracy in
/// HR; `forget` is the forget-test accuracy in CR and the forget-set
/// accuracy in HR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub scenario: Scenario,
    pub test: f64,
    pub forget: f64,
}

pub fn accuracy_report(model: &Model, split: &ScenarioSplit) -> Result<AccuracyReport> {
    let (test, forget) = match &split.test {
        TestSplit::ByClass { retain, forget } => (accuracy(model, retain)?, accuracy(model, forget)?),
        TestSplit::Whole(t) => (accuracy(model, t)?, accuracy(model, &split.forget)?),
    };
    Ok(AccuracyReport { scenario: split.scenario, test, forget })
}

/// One unlearning run. Wall time is kept out of the serialized record so
/// reports are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    pub method: String,
    /// Removed class in CR, split seed in HR.
    pub run: u64,
    pub original_test: f64,
    pub test: f64,
    pub forget: f64,
    pub aus: f64,
    pub mia_f1: Option<f64>,
    pub mia_std: Option<f64>,
    pub epochs: usize,
    pub stop_reason: Option<String>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl MetricsReport {
    pub fn new(method: impl Into<String>, run: u64, original_test: f64, acc: AccuracyReport) -> Result<Self> {
        Ok(MetricsReport {
            scenario: acc.scenario,
            method: method.into(),
            run,
            original_test,
            test: acc.test,
            forget: acc.forget,
            aus: aus(original_test, acc.test, acc.forget, acc.scenario)?,
            mia_f1: None,
            mia_std: None,
            epochs: 0,
            stop_reason: None,
            wall_seconds: 0.0,
        })
    }

    pub fn with_mia(mut self, mia: &MiaResult) -> Self {
        self.mia_f1 = Some(mia.f1_mean);
        self.mia_std = Some(mia.f1_std);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub original_test: MeanStd,
    pub test: MeanStd,
    pub forget: MeanStd,
    pub aus: MeanStd,
    pub mia_f1: Option<MeanStd>,
    pub epochs: MeanStd,
}

pub fn aggregate(runs: &[MetricsReport]) -> Result<Summary> {
    if runs.is_empty() {
        return Err(Error::param("nothing to aggregate"));
    }
    let col = |f: fn(&MetricsReport) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    let mia: Option<Vec<f64>> = runs.iter().map(|r| r.mia_f1).collect();
    Ok(Summary {
        runs: runs.len(),
        original_test: col(|r| r.original_test),
        test: col(|r| r.test),
        forget: col(|r| r.forget),
        aus: col(|r| r.aus),
        mia_f1: mia.map(|v| mean_std(&v)),
        epochs: col(|r| r.epochs as f64),
    })
}
