//! Helpers shared by the integration suites.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scar::data::gen_blobs;
use scar::nn::{Architecture, Gradients, InputShape, Model, ParamId, Tape, Tensor, Var};
use scar::prototypes::{fit_prototypes, normalize_correlation, ClassPrototype, ShrinkageParams, TukeyParam};
use scar::unlearn::{cross_entropy_gradients, objective, objective_gradients, UnlearnConfig};

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
// dead ReLU units give exact zeros; those coordinates carry no information
const MIN_GRAD: f64 = 1e-7;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs())
}

pub fn random(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Checks `probes` random coordinates of `x` and returns how many carried a
/// usable gradient, along with the worst relative error among them.
pub fn probe_leaf(x: &Tensor, probes: usize, rng: &mut ChaCha8Rng, f: impl Fn(&mut Tape, Var) -> Var) -> (usize, f64) {
    let mut tape = Tape::new();
    let v = tape.param(ParamId(0), x);
    let l = f(&mut tape, v);
    let grads = tape.backward(l).unwrap();
    let g = grads.get(ParamId(0)).unwrap().to_vec();
    let value = |t: &Tensor| {
        let mut tape = Tape::new();
        let v = tape.constant(t.clone());
        let l = f(&mut tape, v);
        tape.value(l).item()
    };
    let (mut used, mut worst) = (0, 0.0f64);
    for _ in 0..probes {
        let j = rng.random_range(0..x.len());
        if g[j].abs() < MIN_GRAD {
            continue;
        }
        let mut plus = x.clone();
        plus.data_mut()[j] += H;
        let mut minus = x.clone();
        minus.data_mut()[j] -= H;
        let numeric = (value(&plus) - value(&minus)) / (2.0 * H);
        worst = worst.max(rel_err(g[j], numeric));
        used += 1;
    }
    (used, worst)
}

/// Same as [`probe_leaf`] for model parameters, one probe per parameter
/// tensor per round.
pub fn probe_model(
    model: &Model,
    rounds: usize,
    rng: &mut ChaCha8Rng,
    grads: &dyn Fn(&Model) -> Vec<Vec<f64>>,
    value: &dyn Fn(&Model) -> f64,
) -> (usize, f64) {
    let g = grads(model);
    let (mut used, mut worst) = (0, 0.0f64);
    for _ in 0..rounds {
        for (p, gp) in g.iter().enumerate() {
            let j = rng.random_range(0..gp.len());
            if gp[j].abs() < MIN_GRAD {
                continue;
            }
            let mut plus = model.clone();
            plus.params_mut()[p].data_mut()[j] += H;
            let mut minus = model.clone();
            minus.params_mut()[p].data_mut()[j] -= H;
            let numeric = (value(&plus) - value(&minus)) / (2.0 * H);
            worst = worst.max(rel_err(gp[j], numeric));
            used += 1;
        }
    }
    (used, worst)
}

pub fn dense_grads(g: &Gradients, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| g.get(ParamId(i)).unwrap().to_vec()).collect()
}

pub fn to_na(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

pub fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let s = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
    Tensor::matrix(d, d, s.transpose().as_slice().to_vec()).unwrap()
}

pub fn oracle_distance(v: &[f64], mean: &[f64], cov: &Tensor) -> f64 {
    let inv = to_na(cov).try_inverse().unwrap();
    let r = DVector::from_iterator(v.len(), v.iter().zip(mean).map(|(a, b)| a - b));
    (r.transpose() * inv * &r)[(0, 0)].sqrt()
}

pub fn random_proto(id: usize, d: usize, rng: &mut ChaCha8Rng) -> ClassPrototype {
    let mean = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let cov = normalize_correlation(&random_spd(d, rng)).unwrap();
    ClassPrototype::from_parts(id, mean, cov, 10).unwrap()
}

/// Tukey power followed by the per-row Mahalanobis distance, on the inputs.
/// Returns the usable probe count and the worst relative error.
pub fn probe_tukey_mahalanobis() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // strictly positive inputs keep the power away from its kink at zero
    let x = random(6, 4, 0.2, 2.0, &mut rng);
    let a = random(4, 4, -0.5, 0.5, &mut rng);
    let mut prec = a.transpose().unwrap().matmul(&a).unwrap();
    for i in 0..4 {
        prec.data_mut()[i * 4 + i] += 1.0;
    }
    let prec = Arc::new(prec);
    let centers: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
    probe_leaf(&x, 30, &mut rng, |t, v| {
        let p = t.signed_pow(v, 0.5);
        let d = t.row_mahalanobis(p, centers.clone(), vec![prec.clone(); 6]).unwrap();
        t.mean(d).unwrap()
    })
}

/// Jensen-Shannon distillation divergence, on the student logits.
/// Returns the usable probe count and the worst relative error.
pub fn probe_js_divergence() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = random(5, 4, -2.0, 2.0, &mut rng);
    let q = random(5, 4, -2.0, 2.0, &mut rng);
    let log_q = scar::nn::log_softmax(&q, 2.0).unwrap().data().to_vec();
    probe_leaf(&z, 20, &mut rng, |t, v| t.js_divergence(v, log_q.clone()).unwrap())
}

/// Weighted forget and distillation objective, on every MLP parameter tensor.
/// Returns the usable probe count and the worst relative error.
pub fn probe_combined_objective() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = gen_blobs(3, 40, 6, 0.5, 11).unwrap();
    let arch = Architecture {
        input: InputShape::Vector { dim: 6 },
        conv_channels: vec![],
        hidden: vec![10, 8],
        num_classes: 3,
    };
    let teacher = Model::new(arch.clone(), 5).unwrap();
    let student = Model::new(arch, 6).unwrap();
    let protos = fit_prototypes(&teacher, &data, TukeyParam::new(0.5).unwrap(), ShrinkageParams::default()).unwrap();
    let cfg = UnlearnConfig { temperature: 2.0, ..UnlearnConfig::cr() };
    let idx: Vec<usize> = (0..8).collect();
    let (fx, fy) = data.batch(&idx);
    let sur = random(7, 6, -1.0, 1.0, &mut rng);
    let n = student.params().len();
    probe_model(
        &student,
        4,
        &mut rng,
        &|m| dense_grads(&objective_gradients(m, &teacher, (&fx, &fy), &sur, &protos, &cfg).unwrap().1, n),
        &|m| objective(m, &teacher, (&fx, &fy), &sur, &protos, &cfg).unwrap().total,
    )
}

/// Cross-entropy through conv, pooling and dense layers.
/// Returns the usable probe count and the worst relative error.
pub fn probe_cnn_cross_entropy() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = Model::new(Architecture::small_cnn(1, 8, 8, 3), 9).unwrap();
    let x = random(3, 64, 0.0, 1.0, &mut rng);
    let y = vec![0, 2, 1];
    let n = model.params().len();
    probe_model(&model, 3, &mut rng, &|m| dense_grads(&cross_entropy_gradients(m, &x, &y, false).unwrap().1, n), &|m| {
        scar::nn::cross_entropy(&m.logits(&x).unwrap(), &y).unwrap()
    })
}
