//! Supervised training, the epoch driver shared by every unlearner, the
//! baselines and the standalone distillation check.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EpochRecord, StopReason, Threshold, ThresholdRule, TrainConfig, UnlearnConfig, UnlearnHistory};
use super::losses::{record_distill_loss, teacher_log_probs};
use crate::data::{Dataset, SurrogateDataset};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::nn::{AdamW, Architecture, Gradients, Model, Tape, Tensor};

/// Shuffled index stream that reshuffles after each full pass.
pub(crate) struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    pub(crate) fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Cycler { order, pos: 0 }
    }

    /// Next batch of at most `b` indices; a pass's last batch may be short.
    pub(crate) fn next(&mut self, b: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + b).min(self.order.len());
        let idx = self.order[self.pos..end].to_vec();
        self.pos = end;
        idx
    }
}

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Cross-entropy of one batch and its parameter gradients. With `ascend` the
/// loss is negated, so a descent step increases the cross-entropy.
pub fn cross_entropy_gradients(model: &Model, x: &Tensor, labels: &[usize], ascend: bool) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let z = model.forward(&mut tape, v)?;
    let mut l = tape.cross_entropy(z, labels)?;
    if ascend {
        l = tape.scale(l, -1.0);
    }
    let value = tape.value(l).item();
    Ok((value, tape.backward(l)?))
}

fn ce_step(model: &mut Model, opt: &mut AdamW, x: &Tensor, y: &[usize], ascend: bool) -> Result<f64> {
    let (loss, grads) = cross_entropy_gradients(model, x, y, ascend)?;
    model.set_grads(&grads)?;
    opt.step(model)?;
    Ok(loss)
}

/// One shuffled pass of minibatch cross-entropy steps; returns the mean loss.
fn ce_epoch(
    model: &mut Model,
    opt: &mut AdamW,
    data: &Dataset,
    labels: Option<&[usize]>,
    batch: usize,
    ascend: bool,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut steps = 0;
    for idx in order.chunks(batch) {
        let (x, y) = data.batch(idx);
        let y = match labels {
            Some(l) => idx.iter().map(|&i| l[i]).collect(),
            None => y,
        };
        total += ce_step(model, opt, &x, &y, ascend)?;
        steps += 1;
    }
    Ok(total / steps.max(1) as f64)
}

/// Minibatch cross-entropy training with AdamW.
pub fn train_classifier(mut model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<Model> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::param("training set is empty"));
    }
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut rng = seeded(cfg.seed, 1);
    for _ in 0..cfg.epochs {
        ce_epoch(&mut model, &mut opt, data, None, cfg.batch_size, false, &mut rng)?;
    }
    Ok(model)
}

/// Trains a freshly initialised model; the initialisation uses `cfg.seed`.
pub fn train_original(data: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<Model> {
    train_classifier(Model::new(arch.clone(), cfg.seed)?, data, cfg)
}

/// Retraining from scratch on the retain set, with the original procedure.
pub fn baseline_retrain(retain: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<Model> {
    if retain.is_empty() {
        return Err(Error::param("retain set is empty"));
    }
    train_original(retain, arch, cfg)
}

/// Resolves the stop threshold; the original-test rule evaluates `original`
/// on `test` once.
pub(crate) fn resolve_threshold(config: &UnlearnConfig, original: &Model, test: Option<&Dataset>) -> Result<f64> {
    match config.threshold {
        Threshold::Fixed(e) => Ok(e),
        Threshold::Named(ThresholdRule::OriginalTestAccuracy) => {
            let t = test.ok_or_else(|| Error::param("the original-test threshold needs a test set"))?;
            accuracy(original, t)
        }
    }
}

/// Runs `epoch` up to `max_epochs` times, evaluating `monitor` after each
/// pass and stopping once its accuracy is at or below `threshold`.
pub(crate) fn run_epochs<F>(
    model: &mut Model,
    max_epochs: usize,
    threshold: Option<f64>,
    monitor: &Dataset,
    test: Option<&Dataset>,
    mut epoch: F,
) -> Result<UnlearnHistory>
where
    F: FnMut(&mut Model) -> Result<(f64, f64)>,
{
    let mut records = Vec::new();
    for e in 1..=max_epochs {
        let start = Instant::now();
        let (forget_loss, distill_loss) = epoch(model)?;
        let forget_accuracy = accuracy(model, monitor)?;
        let test_accuracy = test.map(|t| accuracy(model, t)).transpose()?;
        records.push(EpochRecord {
            epoch: e,
            forget_loss,
            distill_loss,
            forget_accuracy,
            test_accuracy,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if threshold.is_some_and(|t| forget_accuracy <= t) {
            return Ok(UnlearnHistory { epochs: records, stop_reason: StopReason::Threshold, threshold });
        }
    }
    Ok(UnlearnHistory { epochs: records, stop_reason: StopReason::MaxEpochs, threshold })
}

/// Continues cross-entropy training of `original` on the retain set for
/// `cfg.epochs` epochs, recording accuracy on `monitor` after each.
pub fn baseline_finetune(
    original: &Model,
    retain: &Dataset,
    cfg: &TrainConfig,
    monitor: &Dataset,
    test: Option<&Dataset>,
) -> Result<(Model, UnlearnHistory)> {
    cfg.validate()?;
    if retain.is_empty() {
        return Err(Error::param("retain set is empty"));
    }
    let mut model = original.clone();
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut rng = seeded(cfg.seed, 4);
    let history = run_epochs(&mut model, cfg.epochs, None, monitor, test, |m| {
        Ok((ce_epoch(m, &mut opt, retain, None, cfg.batch_size, false, &mut rng)?, 0.0))
    })?;
    Ok((model, history))
}

/// Gradient ascent on the forget set's cross-entropy, stopped by the same
/// threshold rule as SCAR.
pub fn baseline_negative_gradient(
    original: &Model,
    forget: &Dataset,
    monitor: &Dataset,
    config: &UnlearnConfig,
    test: Option<&Dataset>,
) -> Result<(Model, UnlearnHistory)> {
    config.validate()?;
    if forget.is_empty() {
        return Err(Error::param("forget set is empty"));
    }
    let threshold = resolve_threshold(config, original, test)?;
    let mut model = original.clone();
    let mut opt = AdamW::new(config.lr, config.weight_decay);
    let mut rng = seeded(config.seed, 5);
    let history = run_epochs(&mut model, config.max_epochs, Some(threshold), monitor, test, |m| {
        let l = ce_epoch(m, &mut opt, forget, None, config.forget_batch, true, &mut rng)?;
        Ok((-l, 0.0))
    })?;
    Ok((model, history))
}

/// For each label, a class drawn uniformly from the other `k − 1` classes.
pub fn random_wrong_labels(labels: &[usize], k: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::param("random relabelling needs at least two classes"));
    }
    labels
        .iter()
        .map(|&y| {
            if y >= k {
                return Err(Error::param(format!("label {y} outside [0, {k})")));
            }
            let r = rng.random_range(0..k - 1);
            Ok(if r >= y { r + 1 } else { r })
        })
        .collect()
}

/// Cross-entropy training on the forget set with labels redrawn every epoch
/// from the wrong classes, stopped by the SCAR threshold rule.
pub fn baseline_random_labels(
    original: &Model,
    forget: &Dataset,
    monitor: &Dataset,
    config: &UnlearnConfig,
    test: Option<&Dataset>,
) -> Result<(Model, UnlearnHistory)> {
    config.validate()?;
    if forget.is_empty() {
        return Err(Error::param("forget set is empty"));
    }
    let threshold = resolve_threshold(config, original, test)?;
    let mut model = original.clone();
    let mut opt = AdamW::new(config.lr, config.weight_decay);
    let mut rng = seeded(config.seed, 6);
    let k = forget.num_classes();
    let history = run_epochs(&mut model, config.max_epochs, Some(threshold), monitor, test, |m| {
        let labels = random_wrong_labels(forget.labels(), k, &mut rng)?;
        Ok((ce_epoch(m, &mut opt, forget, Some(&labels), config.forget_batch, false, &mut rng)?, 0.0))
    })?;
    Ok((model, history))
}

/// Settings of the distillation-only training check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { lr: 5e-4, weight_decay: 5e-4, batch_size: 256, temperature: 1.0, seed: 42 }
    }
}

/// Trains a copy of `teacher` on surrogate data with the distillation loss
/// alone. Returns test accuracy before training followed by one entry per
/// epoch.
pub fn distillation_trick_train(
    teacher: &Model,
    surrogate: &SurrogateDataset,
    test: &Dataset,
    epochs: usize,
    cfg: &DistillConfig,
) -> Result<Vec<f64>> {
    if !(cfg.temperature > 0.0) || cfg.batch_size == 0 {
        return Err(Error::param("distillation needs a positive temperature and batch size"));
    }
    let x = surrogate.samples();
    let log_q = teacher_log_probs(teacher, x, cfg.temperature)?;
    let mut student = teacher.clone();
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut rng = seeded(cfg.seed, 7);
    let mut curve = vec![accuracy(&student, test)?];
    for _ in 0..epochs {
        let mut order: Vec<usize> = (0..x.rows()).collect();
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let v = tape.constant(x.gather_rows(idx));
            let l = record_distill_loss(&mut tape, &student, v, &log_q.gather_rows(idx))?;
            student.backward(&mut tape, l)?;
            opt.step(&mut student)?;
        }
        curve.push(accuracy(&student, test)?);
    }
    Ok(curve)
}
