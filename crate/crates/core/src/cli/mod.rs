//! Batch entry point: experiment files, the train / unlearn / eval / report
//! commands and the artifacts they leave in the output directory.
//!
//! Layout of an output directory:
//!
//! ```text
//! manifest.json              config hash, original accuracy, artifact list
//! timing.json                wall-clock times (not reproducible by nature)
//! original.ckpt              original model
//! prototypes-<key>.ckpt      class prototypes, one per (δ, γ₀, γ₁)
//! <method>/[sur-<n>/]run-<id>/{model.ckpt,history.json}
//! <method>/[sur-<n>/]{report.csv,summary.json}
//! <method>/sweep.csv         one row per surrogate size
//! report.md, *.svg
//! ```

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ks_test, split_cr, split_hr, Dataset, KsResult, Scenario, ScenarioSplit, SurrogateDataset};
use crate::eval::{accuracy, accuracy_report, aggregate, mia_cr, mia_hr, MetricsReport, Summary};
use crate::nn::{InputShape, Model};
use crate::par;
use crate::prototypes::{fit_prototypes, PrototypeSet, ShrinkageParams, TukeyParam};
use crate::unlearn::{
    baseline_finetune, baseline_negative_gradient, baseline_random_labels, baseline_retrain, distillation_trick_train,
    scar_unlearn, train_original, ForgetSource, UnlearnHistory,
};
use crate::{Error, Result};

pub use config::{
    DatasetSpec, DistillCheckSpec, EvalSpec, ExperimentConfig, Method, SurrogateSource, SurrogateSpec, FINETUNE_EPOCHS,
};
pub use report::{line_chart, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::UnsupportedScenario(_) => EXIT_CONFIG,
        Error::MissingArtifact(_) => EXIT_MISSING,
        _ => EXIT_FAILURE,
    }
}

const MANIFEST: &str = "manifest.json";
const TIMING: &str = "timing.json";
const ORIGINAL: &str = "original.ckpt";
const MODEL: &str = "model.ckpt";
const HISTORY: &str = "history.json";
const REPORT_CSV: &str = "report.csv";
const SUMMARY: &str = "summary.json";
const SWEEP_CSV: &str = "sweep.csv";
const REPORT_MD: &str = "report.md";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub method: Method,
    pub run: u64,
    pub surrogate_size: Option<usize>,
    pub checkpoint: Option<String>,
    pub history: String,
}

/// Index of everything a command wrote. Paths are relative to the output
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub original_test_accuracy: Option<f64>,
    pub original_train_accuracy: Option<f64>,
    pub checkpoint: Option<String>,
    pub prototypes: Vec<String>,
    pub runs: Vec<RunEntry>,
    pub reports: Vec<String>,
}

impl RunManifest {
    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| missing_or_io(e, &path))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Every listed artifact, as absolute paths.
    pub fn paths(&self, out: &Path) -> Vec<PathBuf> {
        let mut v: Vec<&String> = self.checkpoint.iter().chain(&self.prototypes).chain(&self.reports).collect();
        for r in &self.runs {
            v.extend(r.checkpoint.iter());
            v.push(&r.history);
        }
        v.into_iter().map(|p| out.join(p)).collect()
    }

    fn add_run(&mut self, entry: RunEntry) {
        self.runs.retain(|r| (r.method, r.run, r.surrogate_size) != (entry.method, entry.run, entry.surrogate_size));
        self.runs.push(entry);
        self.runs.sort_by_key(|r| (r.method.name(), r.surrogate_size, r.run));
    }

    fn add_report(&mut self, path: String) {
        if !self.reports.contains(&path) {
            self.reports.push(path);
            self.reports.sort();
        }
    }
}

/// What one unlearning run leaves behind besides the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub scenario: Scenario,
    pub run: u64,
    pub surrogate_size: Option<usize>,
    pub history: Option<UnlearnHistory>,
    /// Test accuracy per epoch of the distillation-only check, epoch 0 first.
    pub curve: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
}

impl From<KsResult> for KsReport {
    fn from(k: KsResult) -> Self {
        KsReport { statistic: k.statistic, p_value: k.p_value }
    }
}

/// Structured output of `eval` for one method (and surrogate size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub method: Method,
    pub scenario: Scenario,
    pub config_hash: String,
    pub surrogate_size: Option<usize>,
    /// Training inputs against surrogate inputs, all values pooled.
    pub ks: KsReport,
    pub aggregate: Option<Summary>,
    pub runs: Vec<MetricsReport>,
    pub curve: Option<Vec<f64>>,
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub surrogate_size: usize,
    pub runs: usize,
    pub test_mean: f64,
    pub forget_mean: f64,
    pub aus_mean: f64,
    pub aus_std: f64,
}

/// Loaded inputs shared by the commands.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub train: Dataset,
    pub test: Dataset,
}

impl Experiment {
    /// Loads the datasets. A missing dataset file is a configuration error.
    pub fn open(config: ExperimentConfig, out: PathBuf) -> Result<Self> {
        config.validate()?;
        let (train, test) = config.dataset.load().map_err(|e| match e {
            Error::MissingArtifact(p) => Error::Config(format!("dataset file {} not found", p.display())),
            other => other,
        })?;
        if train.num_classes() != test.num_classes() || train.input_shape() != test.input_shape() {
            return Err(Error::Config("train and test sets disagree in shape or classes".into()));
        }
        Ok(Experiment { config, out, train, test })
    }

    fn shape(&self) -> InputShape {
        self.train.input_shape()
    }

    fn sizes(&self) -> Vec<Option<usize>> {
        let m = self.config.method;
        if self.config.sweep_surrogate_sizes.is_empty() || !m.uses_surrogate() {
            vec![None]
        } else {
            self.config.sweep_surrogate_sizes.iter().map(|&n| Some(n)).collect()
        }
    }

    fn surrogate(&self, size: Option<usize>) -> Result<SurrogateDataset> {
        let mut spec = self.config.surrogate.clone();
        if let Some(n) = size {
            spec.size = n;
        }
        spec.load(self.shape())
    }

    fn split(&self, run: u64) -> Result<ScenarioSplit> {
        match self.config.scenario {
            Scenario::Cr => split_cr(&self.train, &self.test, run as usize),
            Scenario::Hr => split_hr(&self.train, &self.test, run),
        }
    }

    fn manifest(&self) -> Result<RunManifest> {
        let hash = self.config.hash();
        if !self.out.join(MANIFEST).exists() {
            return Ok(RunManifest { config_hash: hash, ..RunManifest::default() });
        }
        let m = RunManifest::load(&self.out)?;
        if m.config_hash != hash {
            return Err(Error::Config(format!("{} holds artifacts of a different configuration", self.out.display())));
        }
        Ok(m)
    }

    fn method_dir(&self, method: Method, size: Option<usize>) -> PathBuf {
        let d = PathBuf::from(method.name());
        match size {
            Some(n) => d.join(format!("sur-{n}")),
            None => d,
        }
    }

    fn load_original(&self) -> Result<Model> {
        Model::load(&self.out.join(ORIGINAL))
    }
}

/// File name of the prototype store for one Tukey/shrinkage setting.
pub fn prototype_file(tukey: TukeyParam, shrinkage: ShrinkageParams) -> String {
    let key = format!("{:?}/{:?}/{:?}", tukey.get(), shrinkage.diag, shrinkage.off_diag);
    let digest = hex::encode(Sha256::digest(key.as_bytes()));
    format!("prototypes-{}.ckpt", &digest[..12])
}

fn missing_or_io(e: std::io::Error, path: &Path) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingArtifact(path.to_path_buf())
    } else {
        Error::Io(e)
    }
}

fn rel(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d)?;
    }
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| missing_or_io(e, path))?;
    Ok(serde_json::from_str(&text)?)
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Appends wall-clock entries to `timing.json`.
fn record_timing(out: &Path, entries: BTreeMap<String, f64>) -> Result<()> {
    let path = out.join(TIMING);
    let mut all: BTreeMap<String, f64> = if path.exists() { read_json(&path)? } else { BTreeMap::new() };
    all.extend(entries);
    write_json(&path, &all)
}

/// Outcome of `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub checkpoint: PathBuf,
    pub prototypes: Vec<PathBuf>,
}

pub fn cmd_train(exp: &Experiment) -> Result<TrainOutcome> {
    let started = (unix_now(), Instant::now());
    let cfg = &exp.config;
    fs::create_dir_all(&exp.out)?;
    let mut manifest = exp.manifest()?;
    let arch = cfg.dataset.architecture(exp.shape(), exp.train.num_classes());
    let model = train_original(&exp.train, &arch, &cfg.train)?;
    let checkpoint = exp.out.join(ORIGINAL);
    model.save(&checkpoint)?;

    // one store per distinct (δ, γ) among the prototype-using methods
    let mut files = Vec::new();
    let methods: &[Method] = match cfg.scenario {
        Scenario::Cr => &[Method::Scar, Method::ScarSelfForget],
        Scenario::Hr => &[Method::Scar],
    };
    for &m in methods {
        let u = cfg.unlearn_config(m)?;
        let name = prototype_file(u.tukey, u.shrinkage);
        if !files.contains(&name) {
            fit_prototypes(&model, &exp.train, u.tukey, u.shrinkage)?.save(&exp.out.join(&name))?;
            files.push(name);
        }
    }
    let test_accuracy = accuracy(&model, &exp.test)?;
    let train_accuracy = accuracy(&model, &exp.train)?;
    manifest.original_test_accuracy = Some(test_accuracy);
    manifest.original_train_accuracy = Some(train_accuracy);
    manifest.checkpoint = Some(ORIGINAL.into());
    manifest.prototypes = files.clone();
    write_json(&exp.out.join(MANIFEST), &manifest)?;
    record_timing(
        &exp.out,
        BTreeMap::from([
            ("train.started_unix".into(), started.0),
            ("train.wall_seconds".into(), started.1.elapsed().as_secs_f64()),
        ]),
    )?;
    Ok(TrainOutcome {
        test_accuracy,
        train_accuracy,
        checkpoint,
        prototypes: files.iter().map(|f| exp.out.join(f)).collect(),
    })
}

/// Outcome of `unlearn`: runs executed now and runs found complete.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlearnOutcome {
    pub executed: Vec<RunEntry>,
    pub skipped: Vec<RunEntry>,
}

pub fn cmd_unlearn(exp: &Experiment) -> Result<UnlearnOutcome> {
    let started = (unix_now(), Instant::now());
    let cfg = &exp.config;
    let method = cfg.method;
    let mut manifest = exp.manifest()?;
    let original = exp.load_original()?;
    let runs = if method == Method::DistillTrickCheck { vec![0] } else { cfg.run_ids(exp.train.num_classes())? };

    let prototypes = match method {
        Method::Scar | Method::ScarSelfForget => {
            let u = cfg.unlearn_config(method)?;
            Some(PrototypeSet::load(&exp.out.join(prototype_file(u.tukey, u.shrinkage)))?)
        }
        _ => None,
    };

    let mut jobs = Vec::new();
    for size in exp.sizes() {
        for &run in &runs {
            let dir = exp.method_dir(method, size).join(format!("run-{run}"));
            let entry = RunEntry {
                method,
                run,
                surrogate_size: size,
                checkpoint: (method != Method::DistillTrickCheck).then(|| rel(&dir.join(MODEL))),
                history: rel(&dir.join(HISTORY)),
            };
            let done = exp.out.join(&entry.history).exists()
                && entry.checkpoint.as_ref().is_none_or(|c| exp.out.join(c).exists());
            jobs.push((entry, done));
        }
    }

    // runs are independent; each writes only inside its own directory
    let results: Vec<Result<f64>> = par::map_range(jobs.len(), |i| {
        let (entry, done) = &jobs[i];
        if *done {
            return Ok(0.0);
        }
        let t = Instant::now();
        execute_run(exp, &original, prototypes.as_ref(), entry)?;
        Ok(t.elapsed().as_secs_f64())
    });

    let mut executed = Vec::new();
    let mut skipped = Vec::new();
    let mut timing = BTreeMap::new();
    for ((entry, done), r) in jobs.into_iter().zip(results) {
        let secs = r?;
        if done {
            skipped.push(entry.clone());
        } else {
            timing.insert(format!("unlearn.{}.wall_seconds", entry.history), secs);
            executed.push(entry.clone());
        }
        manifest.add_run(entry);
    }
    write_json(&exp.out.join(MANIFEST), &manifest)?;
    timing.insert(format!("unlearn.{method}.started_unix"), started.0);
    timing.insert(format!("unlearn.{method}.wall_seconds"), started.1.elapsed().as_secs_f64());
    record_timing(&exp.out, timing)?;
    Ok(UnlearnOutcome { executed, skipped })
}

fn execute_run(exp: &Experiment, original: &Model, prototypes: Option<&PrototypeSet>, entry: &RunEntry) -> Result<()> {
    let cfg = &exp.config;
    let method = entry.method;
    let mut record = RunRecord {
        method,
        scenario: cfg.scenario,
        run: entry.run,
        surrogate_size: entry.surrogate_size,
        history: None,
        curve: None,
    };
    if method == Method::DistillTrickCheck {
        let sur = exp.surrogate(entry.surrogate_size)?;
        let d = &cfg.distill_check;
        record.curve = Some(distillation_trick_train(original, &sur, &exp.test, d.epochs, &d.config)?);
        return write_json(&exp.out.join(&entry.history), &record);
    }

    let split = exp.split(entry.run)?;
    // CR monitors the forget class on the test set; HR monitors the forget set
    let (monitor, test) = match cfg.scenario {
        Scenario::Cr => (split.forget_test().unwrap_or(&split.forget), split.retain_test()),
        Scenario::Hr => (&split.forget, Some(&exp.test)),
    };
    let (model, history) = match method {
        Method::Scar | Method::ScarSelfForget => {
            let u = cfg.unlearn_config(method)?;
            let protos = prototypes.ok_or_else(|| Error::State("prototypes not loaded".into()))?;
            let sur = exp.surrogate(entry.surrogate_size)?;
            let class = [entry.run as usize];
            let source = if method == Method::ScarSelfForget {
                ForgetSource::Classes(&class)
            } else {
                ForgetSource::Samples { forget: &split.forget, monitor }
            };
            let (m, h) = scar_unlearn(original, source, &sur, protos, &u, test)?;
            (m, Some(h))
        }
        Method::Retrain => {
            let arch = original.architecture().clone();
            (baseline_retrain(&split.retain, &arch, &cfg.train)?, None)
        }
        Method::Finetune => {
            let (m, h) = baseline_finetune(original, &split.retain, &cfg.finetune_config(), monitor, test)?;
            (m, Some(h))
        }
        Method::NegGrad => {
            let u = cfg.unlearn_config(method)?;
            let (m, h) = baseline_negative_gradient(original, &split.forget, monitor, &u, test)?;
            (m, Some(h))
        }
        Method::RandomLabels => {
            let u = cfg.unlearn_config(method)?;
            let (m, h) = baseline_random_labels(original, &split.forget, monitor, &u, test)?;
            (m, Some(h))
        }
        Method::DistillTrickCheck => unreachable!("handled above"),
    };
    record.history = history;
    let ckpt = entry.checkpoint.as_ref().ok_or_else(|| Error::State("run entry without a checkpoint path".into()))?;
    let ckpt = exp.out.join(ckpt);
    if let Some(d) = ckpt.parent() {
        fs::create_dir_all(d)?;
    }
    model.save(&ckpt)?;
    // history last: its presence marks the run complete
    write_json(&exp.out.join(&entry.history), &record)
}

/// Outcome of `eval`: one summary per surrogate size.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub summaries: Vec<EvalSummary>,
    pub sweep: Vec<SweepRow>,
}

pub fn cmd_eval(exp: &Experiment) -> Result<EvalOutcome> {
    let started = (unix_now(), Instant::now());
    let cfg = &exp.config;
    let method = cfg.method;
    let mut manifest = exp.manifest()?;
    let a_or = manifest.original_test_accuracy.ok_or_else(|| Error::MissingArtifact(exp.out.join(ORIGINAL)))?;
    let original_needed = method != Method::DistillTrickCheck;
    let run_ids = if original_needed { cfg.run_ids(exp.train.num_classes())? } else { vec![0] };
    let train_values = exp.train.inputs().data();

    let mut summaries = Vec::new();
    let mut sweep = Vec::new();
    for size in exp.sizes() {
        let entries: Vec<&RunEntry> = run_ids
            .iter()
            .map(|&run| {
                manifest
                    .runs
                    .iter()
                    .find(|r| r.method == method && r.run == run && r.surrogate_size == size)
                    .ok_or_else(|| {
                        Error::MissingArtifact(exp.out.join(exp.method_dir(method, size)).join(format!("run-{run}")))
                    })
            })
            .collect::<Result<_>>()?;
        let sur = exp.surrogate(size)?;
        let ks: KsReport = ks_test(train_values, sur.samples().data())?.into();

        let dir = exp.method_dir(method, size);
        let records: Vec<RunRecord> =
            entries.iter().map(|e| read_json(&exp.out.join(&e.history))).collect::<Result<_>>()?;

        let summary = if method == Method::DistillTrickCheck {
            let curve =
                records[0].curve.clone().ok_or_else(|| Error::State("distillation run without a curve".into()))?;
            report::write_curve_csv(&exp.out.join(&dir).join(REPORT_CSV), &curve)?;
            EvalSummary {
                method,
                scenario: cfg.scenario,
                config_hash: manifest.config_hash.clone(),
                surrogate_size: size,
                ks,
                aggregate: None,
                runs: Vec::new(),
                curve: Some(curve),
            }
        } else {
            let reports: Vec<Result<MetricsReport>> =
                par::map_range(entries.len(), |i| evaluate_run(exp, a_or, entries[i], &records[i]));
            let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
            let agg = aggregate(&reports)?;
            report::write_report_csv(&exp.out.join(&dir).join(REPORT_CSV), &reports, &agg, size)?;
            if let Some(n) = size {
                sweep.push(SweepRow {
                    method: method.name().into(),
                    surrogate_size: n,
                    runs: agg.runs,
                    test_mean: agg.test.mean,
                    forget_mean: agg.forget.mean,
                    aus_mean: agg.aus.mean,
                    aus_std: agg.aus.std,
                });
            }
            EvalSummary {
                method,
                scenario: cfg.scenario,
                config_hash: manifest.config_hash.clone(),
                surrogate_size: size,
                ks,
                aggregate: Some(agg),
                runs: reports,
                curve: None,
            }
        };
        write_json(&exp.out.join(&dir).join(SUMMARY), &summary)?;
        manifest.add_report(rel(&dir.join(REPORT_CSV)));
        manifest.add_report(rel(&dir.join(SUMMARY)));
        summaries.push(summary);
    }
    if !sweep.is_empty() {
        let path = PathBuf::from(method.name()).join(SWEEP_CSV);
        report::write_rows(&exp.out.join(&path), &sweep)?;
        manifest.add_report(rel(&path));
    }
    write_json(&exp.out.join(MANIFEST), &manifest)?;
    record_timing(
        &exp.out,
        BTreeMap::from([(format!("eval.{method}.wall_seconds"), started.1.elapsed().as_secs_f64())]),
    )?;
    Ok(EvalOutcome { summaries, sweep })
}

fn evaluate_run(exp: &Experiment, a_or: f64, entry: &RunEntry, record: &RunRecord) -> Result<MetricsReport> {
    let ckpt = entry.checkpoint.as_ref().ok_or_else(|| Error::State("run entry without a checkpoint".into()))?;
    let model = Model::load(&exp.out.join(ckpt))?;
    let split = exp.split(entry.run)?;
    let mut report = MetricsReport::new(entry.method.name(), entry.run, a_or, accuracy_report(&model, &split)?)?;
    if let Some(h) = &record.history {
        report.epochs = h.epochs_run();
        report.stop_reason = Some(format!("{:?}", h.stop_reason));
    } else if entry.method == Method::Retrain {
        report.epochs = exp.config.train.epochs;
    }
    let eval = &exp.config.eval;
    if eval.mia {
        let mia = match exp.config.scenario {
            Scenario::Cr => {
                let ft =
                    split.forget_test().ok_or_else(|| Error::State("class split without a forget test set".into()))?;
                mia_cr(&model, &split.forget, ft, eval.seed)?
            }
            Scenario::Hr => mia_hr(&model, &split.forget, &exp.test, eval.seed)?,
        };
        report = report.with_mia(&mia);
    }
    Ok(report)
}

/// Outcome of `report`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub markdown: PathBuf,
    pub charts: Vec<PathBuf>,
}

pub fn cmd_report(exp: &Experiment) -> Result<ReportOutcome> {
    let mut manifest = exp.manifest()?;
    let mut summaries = Vec::new();
    let mut sweeps: Vec<(Method, Vec<SweepRow>)> = Vec::new();
    for m in Method::ALL {
        let dir = exp.out.join(m.name());
        let path = dir.join(SUMMARY);
        if path.exists() {
            summaries.push(read_json::<EvalSummary>(&path)?);
        }
        let sweep = dir.join(SWEEP_CSV);
        if sweep.exists() {
            sweeps.push((m, report::read_rows(&sweep)?));
            // sized summaries live one level down
            for size in &exp.config.sweep_surrogate_sizes {
                let p = dir.join(format!("sur-{size}")).join(SUMMARY);
                if p.exists() {
                    summaries.push(read_json::<EvalSummary>(&p)?);
                }
            }
        }
    }
    if summaries.is_empty() {
        return Err(Error::MissingArtifact(exp.out.join(exp.config.method.name()).join(SUMMARY)));
    }
    let markdown = exp.out.join(REPORT_MD);
    fs::write(&markdown, report::markdown(&manifest, &summaries, &sweeps))?;
    manifest.add_report(REPORT_MD.into());

    let mut charts = Vec::new();
    if !sweeps.is_empty() {
        for (name, title, pick) in [
            ("aus_vs_surrogate_size.svg", "AUS", (|r: &SweepRow| r.aus_mean) as fn(&SweepRow) -> f64),
            ("forget_vs_surrogate_size.svg", "forget accuracy", |r: &SweepRow| r.forget_mean),
            ("test_vs_surrogate_size.svg", "test accuracy", |r: &SweepRow| r.test_mean),
        ] {
            let series: Vec<Series> = sweeps
                .iter()
                .map(|(m, rows)| Series {
                    name: m.name().into(),
                    points: rows.iter().map(|r| (r.surrogate_size as f64, pick(r))).collect(),
                })
                .collect();
            let path = exp.out.join(name);
            fs::write(&path, line_chart(&format!("{title} vs surrogate size"), "surrogate size", title, &series))?;
            manifest.add_report(name.into());
            charts.push(path);
        }
    }
    if let Some(curve) = summaries.iter().find_map(|s| s.curve.as_ref().filter(|_| s.surrogate_size.is_none())) {
        let name = "distillation_curve.svg";
        let series = [Series {
            name: "test accuracy".into(),
            points: curve.iter().enumerate().map(|(e, &a)| (e as f64, a)).collect(),
        }];
        let path = exp.out.join(name);
        fs::write(&path, line_chart("distillation-only training", "epoch", "test accuracy", &series))?;
        manifest.add_report(name.into());
        charts.push(path);
    }
    write_json(&exp.out.join(MANIFEST), &manifest)?;
    Ok(ReportOutcome { markdown, charts })
}
