use crate::data::{Dataset, Scenario, SurrogateDataset};
use crate::error::{Error, Result};
use crate::nn::{AdamW, Model, Tape, Tensor};
use crate::prototypes::PrototypeSet;

use super::config::{UnlearnConfig, UnlearnHistory};
use super::losses::{record_objective, teacher_log_probs};
use super::training::{resolve_threshold, run_epochs, seeded, Cycler};

/// Where forget samples come from.
#[derive(Debug, Clone, Copy)]
pub enum ForgetSource<'a> {
    /// The forget set, with the labelled set whose accuracy drives stopping
    /// (the held-out forget-class test set in CR, the forget set in HR).
    Samples { forget: &'a Dataset, monitor: &'a Dataset },
    /// Only the ids of the classes to remove; surrogate samples the original
    /// model assigns to them stand in for the forget set.
    Classes(&'a [usize]),
}

/// Surrogate samples split by the original model's predicted class.
#[derive(Debug, Clone)]
pub struct SelfForgetPartition {
    /// Predicted into a retained class; `None` when no sample was.
    pub retain: Option<SurrogateDataset>,
    /// Predicted into a forget class, labelled with that prediction.
    pub forget: Dataset,
    pub retain_indices: Vec<usize>,
    pub forget_indices: Vec<usize>,
}

pub fn self_forget_partition(
    original: &Model,
    surrogate: &SurrogateDataset,
    forget_classes: &[usize],
) -> Result<SelfForgetPartition> {
    let k = original.num_classes();
    let mut is_forget = vec![false; k];
    for &c in forget_classes {
        *is_forget.get_mut(c).ok_or_else(|| Error::param(format!("class {c} outside [0, {k})")))? = true;
    }
    let n_forget = is_forget.iter().filter(|&&f| f).count();
    if n_forget == 0 || n_forget == k {
        return Err(Error::param("forget classes must be a non-empty strict subset"));
    }
    let pred = original.predict(surrogate.samples())?;
    let (forget_indices, retain_indices): (Vec<usize>, Vec<usize>) = (0..pred.len()).partition(|&i| is_forget[pred[i]]);
    if forget_indices.is_empty() {
        return Err(Error::SelfForgetInfeasible(format!(
            "no surrogate sample is predicted into classes {forget_classes:?}"
        )));
    }
    let labels = forget_indices.iter().map(|&i| pred[i]).collect();
    let forget = Dataset::new(
        "surrogate-forget",
        surrogate.samples().gather_rows(&forget_indices),
        labels,
        k,
        surrogate.input_shape(),
    )?;
    let retain = if retain_indices.is_empty() { None } else { Some(surrogate.subset(&retain_indices)?) };
    Ok(SelfForgetPartition { retain, forget, retain_indices, forget_indices })
}

/// Unlearns `source` from a copy of `original`, which stays untouched and
/// serves as the frozen teacher. `test` is recorded after every epoch and is
/// required by the original-test threshold rule.
pub fn scar_unlearn(
    original: &Model,
    source: ForgetSource<'_>,
    surrogate: &SurrogateDataset,
    prototypes: &PrototypeSet,
    config: &UnlearnConfig,
    test: Option<&Dataset>,
) -> Result<(Model, UnlearnHistory)> {
    config.validate()?;
    if config.tukey != prototypes.tukey {
        return Err(Error::param("the Tukey exponent differs from the one the prototypes were fitted with"));
    }
    if surrogate.is_empty() {
        return Err(Error::param("surrogate set is empty"));
    }
    match source {
        ForgetSource::Samples { forget, monitor } => {
            if forget.is_empty() {
                return Err(Error::param("forget set is empty"));
            }
            let x = forget.inputs().clone();
            run_scar(original, &x, forget.labels(), surrogate.samples(), monitor, prototypes, config, test)
        }
        ForgetSource::Classes(classes) => {
            if config.scenario == Scenario::Hr {
                return Err(Error::UnsupportedScenario("self-forget is defined for class removal only".into()));
            }
            let part = self_forget_partition(original, surrogate, classes)?;
            let retain = part
                .retain
                .as_ref()
                .ok_or_else(|| Error::param("no surrogate sample is predicted into a retained class"))?;
            let f = &part.forget;
            run_scar(original, f.inputs(), f.labels(), retain.samples(), f, prototypes, config, test)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_scar(
    original: &Model,
    fx: &Tensor,
    fy: &[usize],
    sx: &Tensor,
    monitor: &Dataset,
    prototypes: &PrototypeSet,
    config: &UnlearnConfig,
    test: Option<&Dataset>,
) -> Result<(Model, UnlearnHistory)> {
    if sx.cols() != original.input_dim() || fx.cols() != original.input_dim() {
        return Err(Error::dim("unlearning data does not match the model input"));
    }
    let threshold = resolve_threshold(config, original, test)?;
    let log_q = teacher_log_probs(original, sx, config.temperature)?;
    let mut student = original.clone();
    let mut opt = AdamW::new(config.lr, config.weight_decay);
    let mut rng = seeded(config.seed, 3);
    let mut forget_stream = Cycler::new(fx.rows(), &mut rng);
    let mut sur_stream = Cycler::new(sx.rows(), &mut rng);
    let (nf, ns) = (fx.rows(), sx.rows());
    let steps = nf.div_ceil(config.forget_batch).max(ns.div_ceil(config.surrogate_batch));
    let history = run_epochs(&mut student, config.max_epochs, Some(threshold), monitor, test, |m| {
        let (mut lf, mut ld) = (0.0, 0.0);
        for _ in 0..steps {
            let fi = forget_stream.next(config.forget_batch, &mut rng);
            let si = sur_stream.next(config.surrogate_batch, &mut rng);
            let xf = fx.gather_rows(&fi);
            let yf: Vec<usize> = fi.iter().map(|&i| fy[i]).collect();
            let xs = sx.gather_rows(&si);
            let lq = log_q.gather_rows(&si);
            let mut tape = Tape::new();
            let (loss, parts) = record_objective(&mut tape, m, Some((&xf, &yf)), Some((&xs, &lq)), prototypes, config)?;
            m.backward(&mut tape, loss)?;
            opt.step(m)?;
            lf += parts.forget;
            ld += parts.distill;
        }
        Ok((lf / steps as f64, ld / steps as f64))
    })?;
    Ok((student, history))
}
