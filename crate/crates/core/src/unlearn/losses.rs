//! Forget loss, distillation loss and their weighted combination.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::{log_softmax, Gradients, Model, Tape, Tensor, Var};
use crate::prototypes::{PrototypeSet, TukeyParam};

use super::UnlearnConfig;

/// Records the mean Mahalanobis distance between Tukey-transformed features
/// of `x` and each row's nearest wrong-class prototype. The prototype
/// choice is made on the current values and is not differentiated.
pub(crate) fn record_forget_loss(
    tape: &mut Tape,
    model: &Model,
    x: Var,
    labels: &[usize],
    prototypes: &PrototypeSet,
    tukey: TukeyParam,
) -> Result<Var> {
    let f = model.features(tape, x)?;
    let t = tape.signed_pow(f, tukey.get());
    let tv = tape.value(t);
    if tv.rows() == 0 {
        return Err(Error::param("forget batch is empty"));
    }
    if labels.len() != tv.rows() {
        return Err(Error::dim("one label per forget sample required"));
    }
    let mut centers = Vec::with_capacity(tv.len());
    let mut precisions = Vec::with_capacity(tv.rows());
    for (i, &y) in labels.iter().enumerate() {
        let q = prototypes.nearest_wrong(tv.row(i), y)?;
        centers.extend_from_slice(&q.mean);
        precisions.push(Arc::clone(&q.precision));
    }
    let d = tape.row_mahalanobis(t, centers, precisions)?;
    tape.mean(d)
}

/// Teacher log-probabilities at temperature `t`, one row per sample.
pub(crate) fn teacher_log_probs(teacher: &Model, x: &Tensor, t: f64) -> Result<Tensor> {
    log_softmax(&teacher.logits(x)?, t)
}

pub(crate) fn record_distill_loss(tape: &mut Tape, student: &Model, x: Var, log_q: &Tensor) -> Result<Var> {
    let z = student.forward(tape, x)?;
    tape.js_divergence(z, log_q.data().to_vec())
}

/// Mean forget loss over a batch.
pub fn forget_loss(
    model: &Model,
    x: &Tensor,
    labels: &[usize],
    prototypes: &PrototypeSet,
    tukey: TukeyParam,
) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::param("forget batch is empty"));
    }
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let l = record_forget_loss(&mut tape, model, v, labels, prototypes, tukey)?;
    Ok(tape.value(l).item())
}

/// Mean Jensen-Shannon divergence between the student's softmax and the
/// teacher's softmax at temperature `t`.
pub fn distillation_loss(student: &Model, teacher: &Model, x: &Tensor, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param("temperature must be positive"));
    }
    let log_q = teacher_log_probs(teacher, x, t)?;
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let l = record_distill_loss(&mut tape, student, v, &log_q)?;
    Ok(tape.value(l).item())
}

/// Components of one combined-objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub forget: f64,
    pub distill: f64,
}

/// Records `w_f·L_M + w_d·L_TD`. Either branch is skipped when its batch is
/// absent.
pub(crate) fn record_objective(
    tape: &mut Tape,
    student: &Model,
    forget: Option<(&Tensor, &[usize])>,
    surrogate: Option<(&Tensor, &Tensor)>,
    prototypes: &PrototypeSet,
    config: &UnlearnConfig,
) -> Result<(Var, LossParts)> {
    let mut total: Option<Var> = None;
    let mut parts = LossParts { total: 0.0, forget: 0.0, distill: 0.0 };
    if let Some((x, y)) = forget {
        let v = tape.constant(x.clone());
        let l = record_forget_loss(tape, student, v, y, prototypes, config.tukey)?;
        parts.forget = tape.value(l).item();
        total = Some(tape.scale(l, config.forget_weight));
    }
    if let Some((x, log_q)) = surrogate {
        let v = tape.constant(x.clone());
        let l = record_distill_loss(tape, student, v, log_q)?;
        parts.distill = tape.value(l).item();
        let s = tape.scale(l, config.distill_weight);
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    let total = total.ok_or_else(|| Error::param("objective needs a forget or surrogate batch"))?;
    parts.total = tape.value(total).item();
    Ok((total, parts))
}

/// Value and parameter gradients of the combined objective on fixed batches.
pub fn objective_gradients(
    student: &Model,
    teacher: &Model,
    forget: (&Tensor, &[usize]),
    surrogate: &Tensor,
    prototypes: &PrototypeSet,
    config: &UnlearnConfig,
) -> Result<(LossParts, Gradients)> {
    let log_q = teacher_log_probs(teacher, surrogate, config.temperature)?;
    let mut tape = Tape::new();
    let (l, parts) = record_objective(&mut tape, student, Some(forget), Some((surrogate, &log_q)), prototypes, config)?;
    Ok((parts, tape.backward(l)?))
}

/// Value of the combined objective on fixed batches.
pub fn objective(
    student: &Model,
    teacher: &Model,
    forget: (&Tensor, &[usize]),
    surrogate: &Tensor,
    prototypes: &PrototypeSet,
    config: &UnlearnConfig,
) -> Result<LossParts> {
    let log_q = teacher_log_probs(teacher, surrogate, config.temperature)?;
    let mut tape = Tape::new();
    Ok(record_objective(&mut tape, student, Some(forget), Some((surrogate, &log_q)), prototypes, config)?.1)
}
