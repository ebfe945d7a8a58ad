//! Membership inference against a model's softmax outputs.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::svm::{grid_search_svm, C_GRID, GAMMA_GRID};
use super::{mean_std, MeanStd};
use crate::data::{Dataset, Scenario};
use crate::error::{Error, Result};
use crate::nn::{softmax, Model, Tensor};
use crate::par;

pub const MIA_ITERATIONS: usize = 10;
pub const MIA_TEST_FRACTION: f64 = 0.2;
pub const MIA_FOLDS: usize = 3;
/// Members per non-member in the class-removal pool.
pub const CR_MEMBER_RATIO: usize = 3;
const MIN_MEMBERS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaResult {
    /// Micro-averaged F1 over the held-out split, mean over iterations.
    pub f1_mean: f64,
    pub f1_std: f64,
    pub chance: f64,
    pub f1_per_iteration: Vec<f64>,
    /// F1 with "member" as the positive class, mean over iterations.
    pub member_f1_mean: f64,
}

impl MiaResult {
    pub fn summary(&self) -> MeanStd {
        MeanStd { mean: self.f1_mean, std: self.f1_std }
    }
}

/// Chance-level score of the attack under each scenario's pool balance.
pub fn mia_chance(scenario: Scenario) -> f64 {
    match scenario {
        Scenario::Hr => 0.5,
        Scenario::Cr => CR_MEMBER_RATIO as f64 / (CR_MEMBER_RATIO + 1) as f64,
    }
}

/// Micro-averaged F1. For single-label binary predictions this is the
/// fraction of correct predictions, so a majority-class guess scores the
/// majority share of the pool.
pub fn micro_f1(truth: &[bool], pred: &[bool]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / truth.len() as f64
}

/// F1 with "member" as the positive class.
pub fn f1_score(truth: &[bool], pred: &[bool]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&t, &p) in truth.iter().zip(pred) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn softmax_rows(model: &Model, d: &Dataset) -> Result<Vec<Vec<f64>>> {
    Ok(rows(&softmax(&model.logits(d.inputs())?, 1.0)?))
}

/// Attack on membership feature vectors. In HR every member is paired with
/// an equal number of non-members; in CR members outnumber non-members
/// `CR_MEMBER_RATIO` to one. Each iteration redraws the pool and the 80/20
/// split with its own seed stream.
pub fn mia_on_outputs(
    members: &[Vec<f64>],
    non_members: &[Vec<f64>],
    scenario: Scenario,
    seed: u64,
) -> Result<MiaResult> {
    if members.len() < MIN_MEMBERS {
        return Err(Error::InsufficientData(format!(
            "membership inference needs at least {MIN_MEMBERS} members, got {}",
            members.len()
        )));
    }
    let (n_mem, n_non) = match scenario {
        Scenario::Hr => {
            if non_members.len() < members.len() {
                return Err(Error::InsufficientData(format!(
                    "{} non-members cannot balance {} members",
                    non_members.len(),
                    members.len()
                )));
            }
            (members.len(), members.len())
        }
        Scenario::Cr => {
            let n_non = non_members.len().min(members.len() / CR_MEMBER_RATIO);
            if n_non < MIA_FOLDS {
                return Err(Error::InsufficientData(format!(
                    "only {n_non} non-members available for a {CR_MEMBER_RATIO}:1 pool"
                )));
            }
            (CR_MEMBER_RATIO * n_non, n_non)
        }
    };
    let scores = par::map_range(MIA_ITERATIONS, |it| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(it as u64);
        let mut x = Vec::with_capacity(n_mem + n_non);
        let mut y = Vec::with_capacity(n_mem + n_non);
        for i in index::sample(&mut rng, members.len(), n_mem) {
            x.push(members[i].clone());
            y.push(true);
        }
        for i in index::sample(&mut rng, non_members.len(), n_non) {
            x.push(non_members[i].clone());
            y.push(false);
        }
        let (train, test) = stratified_holdout(&y, MIA_TEST_FRACTION, &mut rng);
        let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let (svm, _) = grid_search_svm(&xt, &yt, &C_GRID, &GAMMA_GRID, MIA_FOLDS, &mut rng)?;
        let truth: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        let pred: Vec<bool> = test.iter().map(|&i| svm.predict(&x[i])).collect();
        Ok((micro_f1(&truth, &pred), f1_score(&truth, &pred)))
    });
    let scores: Vec<(f64, f64)> = scores.into_iter().collect::<Result<_>>()?;
    let f1: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let member: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let ms = mean_std(&f1);
    Ok(MiaResult {
        f1_mean: ms.mean,
        f1_std: ms.std,
        chance: mia_chance(scenario),
        f1_per_iteration: f1,
        member_f1_mean: mean_std(&member).mean,
    })
}

fn stratified_holdout(y: &[bool], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(rng);
        let k = (fraction * idx.len() as f64).round() as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    (train, test)
}

/// HR attack: forget-set outputs against test-set outputs.
pub fn mia_hr(model: &Model, forget: &Dataset, test: &Dataset, seed: u64) -> Result<MiaResult> {
    mia_on_outputs(&softmax_rows(model, forget)?, &softmax_rows(model, test)?, Scenario::Hr, seed)
}

/// CR attack: forget-class training outputs against forget-class test outputs.
pub fn mia_cr(model: &Model, forget: &Dataset, forget_test: &Dataset, seed: u64) -> Result<MiaResult> {
    mia_on_outputs(&softmax_rows(model, forget)?, &softmax_rows(model, forget_test)?, Scenario::Cr, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn f1_closed_forms() {
        assert_eq!(f1_score(&[true, true, false, false], &[true, true, false, false]), 1.0);
        assert_eq!(f1_score(&[true, false], &[false, true]), 0.0);
        // tp 1, fp 1, fn 1
        assert!((f1_score(&[true, true, false], &[true, false, true]) - 0.5).abs() < 1e-15);
        let truth = [true, true, true, false];
        assert_eq!(micro_f1(&truth, &[true; 4]), 0.75);
        assert!((f1_score(&truth, &[true; 4]) - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn separable_outputs_are_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let members: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let mut v = vec![0.0; 4];
                v[i % 4] = 1.0;
                v
            })
            .collect();
        let non: Vec<Vec<f64>> =
            (0..200).map(|_| (0..4).map(|_| 0.25 + rng.random_range(-0.01..0.01)).collect()).collect();
        let r = mia_on_outputs(&members, &non, Scenario::Hr, 1).unwrap();
        assert!(r.f1_mean >= 0.99, "{r:?}");
        assert_eq!(r.f1_per_iteration.len(), MIA_ITERATIONS);
    }

    #[test]
    fn too_few_members() {
        let v = vec![vec![0.5, 0.5]; 9];
        assert!(matches!(mia_on_outputs(&v, &v, Scenario::Hr, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
        let b: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
        assert_eq!(mia_on_outputs(&a, &b, Scenario::Hr, 9).unwrap(), mia_on_outputs(&a, &b, Scenario::Hr, 9).unwrap());
    }
}
