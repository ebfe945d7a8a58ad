//! Soft-margin RBF-kernel SVM trained with an SMO dual solver, plus a
//! cross-validated grid search over `(C, gamma)`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// KKT violation tolerance of the dual solver.
pub const KKT_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;
const MAX_ITER: usize = 200_000;

pub const C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// Kernel width candidate; `Scale` resolves to `1 / (d · var(X))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Fixed(f64),
    Scale,
}

pub const GAMMA_GRID: [Gamma; 4] = [Gamma::Fixed(0.01), Gamma::Fixed(0.1), Gamma::Fixed(1.0), Gamma::Scale];

impl Gamma {
    pub fn resolve(self, x: &[Vec<f64>]) -> f64 {
        match self {
            Gamma::Fixed(g) => g,
            Gamma::Scale => {
                let d = x.first().map_or(1, Vec::len).max(1);
                let n = (x.len() * d) as f64;
                let mean = x.iter().flatten().sum::<f64>() / n;
                let var = x.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    1.0 / (d as f64 * var)
                } else {
                    1.0
                }
            }
        }
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-gamma * d2).exp()
}

/// Dense symmetric kernel matrix over `x`.
fn gram(x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf(&x[i], &x[j], gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Solves the dual for labels `y ∈ {±1}` given the kernel matrix.
/// Returns `(alpha, rho)`; the decision function is `Σ αᵢ yᵢ K(xᵢ, x) − rho`.
fn smo(k: &[f64], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);
    for _ in 0..MAX_ITER {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * g[t] > g_max {
                g_max = -y[t] * g[t];
                i = t;
            }
        }
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * g[t];
            g_min = g_min.min(v);
            if i != usize::MAX && v < g_max {
                let b = g_max - v;
                let mut a = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                if a <= 0.0 {
                    a = TAU;
                }
                if -b * b / a < best {
                    best = -b * b / a;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < KKT_TOLERANCE {
            break;
        }
        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k[i * n + j];
        if y[i] != y[j] {
            let quad = (k[i * n + i] + k[j * n + j] + 2.0 * qij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[i * n + i] + k[j * n + j] - 2.0 * qij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            g[t] += y[t] * (y[i] * k[i * n + t] * di + y[j] * k[j * n + t] * dj);
        }
    }
    (alpha.clone(), rho(&alpha, &g, y, c))
}

fn rho(alpha: &[f64], g: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..y.len() {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Trained binary classifier; `true` is the positive class.
#[derive(Debug, Clone)]
pub struct KernelSvm {
    support: Vec<Vec<f64>>,
    coef: Vec<f64>,
    rho: f64,
    gamma: f64,
}

impl KernelSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support.iter().zip(&self.coef).map(|(s, c)| c * rbf(s, x, self.gamma)).sum::<f64>() - self.rho
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }

    pub fn support_count(&self) -> usize {
        self.support.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

fn check_binary(y: &[bool]) -> Result<()> {
    let pos = y.iter().filter(|&&v| v).count();
    if pos < 2 || y.len() - pos < 2 {
        return Err(Error::param("kernel SVM needs at least two samples of each class"));
    }
    Ok(())
}

fn signs(y: &[bool]) -> Vec<f64> {
    y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect()
}

fn from_solution(x: &[Vec<f64>], y: &[f64], alpha: &[f64], rho: f64, gamma: f64) -> KernelSvm {
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for i in 0..x.len() {
        if alpha[i] > 0.0 {
            support.push(x[i].clone());
            coef.push(alpha[i] * y[i]);
        }
    }
    KernelSvm { support, coef, rho, gamma }
}

pub fn fit_kernel_svm(x: &[Vec<f64>], y: &[bool], c: f64, gamma: f64) -> Result<KernelSvm> {
    if x.len() != y.len() {
        return Err(Error::dim("SVM features and labels differ in length"));
    }
    check_binary(y)?;
    if !(c > 0.0 && gamma > 0.0) {
        return Err(Error::param("SVM needs C > 0 and gamma > 0"));
    }
    let ys = signs(y);
    let (alpha, rho) = smo(&gram(x, gamma), &ys, c);
    Ok(from_solution(x, &ys, &alpha, rho, gamma))
}

/// Chosen hyperparameters and their mean cross-validated accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridChoice {
    pub c: f64,
    pub gamma: f64,
    pub cv_accuracy: f64,
}

/// Stratified `folds`-fold assignment, shuffled with `rng`.
pub(crate) fn stratified_folds(y: &[bool], folds: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut fold = vec![0; y.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % folds;
        }
    }
    fold
}

fn sub_gram(k: &[f64], n: usize, idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let mut out = Vec::with_capacity(m * m);
    for &i in idx {
        out.extend(idx.iter().map(|&j| k[i * n + j]));
    }
    out
}

/// Grid search by `folds`-fold cross-validated accuracy, then a refit on all
/// of `x`. Candidates are visited in ascending `(C, gamma)` order and ties
/// keep the first, so the result does not depend on how the grid is listed.
pub fn grid_search_svm(
    x: &[Vec<f64>],
    y: &[bool],
    c_grid: &[f64],
    gamma_grid: &[Gamma],
    folds: usize,
    rng: &mut impl Rng,
) -> Result<(KernelSvm, GridChoice)> {
    check_binary(y)?;
    if c_grid.is_empty() || gamma_grid.is_empty() || folds < 2 {
        return Err(Error::param("grid search needs candidates and at least two folds"));
    }
    let mut gammas: Vec<f64> = gamma_grid.iter().map(|g| g.resolve(x)).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let mut cs = c_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    cs.dedup();

    let n = x.len();
    let ys = signs(y);
    let fold = stratified_folds(y, folds, rng);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..folds).map(|f| (0..n).partition(|&i| fold[i] != f)).collect();
    let mut best: Option<GridChoice> = None;
    let mut best_gram = Vec::new();
    for &gamma in &gammas {
        let k = gram(x, gamma);
        for &c in &cs {
            let mut correct = 0usize;
            for (train, held) in &splits {
                let yt: Vec<f64> = train.iter().map(|&i| ys[i]).collect();
                if yt.iter().all(|&v| v == yt[0]) {
                    continue;
                }
                let (alpha, rho) = smo(&sub_gram(&k, n, train), &yt, c);
                for &h in held {
                    let f: f64 = train
                        .iter()
                        .zip(&alpha)
                        .filter(|(_, a)| **a > 0.0)
                        .map(|(&t, a)| a * ys[t] * k[t * n + h])
                        .sum::<f64>()
                        - rho;
                    if (f > 0.0) == y[h] {
                        correct += 1;
                    }
                }
            }
            let acc = correct as f64 / n as f64;
            if best.is_none_or(|b| acc > b.cv_accuracy) {
                best = Some(GridChoice { c, gamma, cv_accuracy: acc });
                best_gram = k.clone();
            }
        }
    }
    let choice = best.expect("non-empty grid");
    let (alpha, rho) = smo(&best_gram, &ys, choice.c);
    Ok((from_solution(x, &ys, &alpha, rho, choice.gamma), choice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_points_split_at_midpoint() {
        let x = vec![vec![-1.0], vec![-1.1], vec![1.0], vec![1.1]];
        let y = [false, false, true, true];
        let svm = fit_kernel_svm(&x, &y, 10.0, 0.5).unwrap();
        for (xi, yi) in x.iter().zip(y) {
            assert_eq!(svm.predict(xi), yi);
        }
        assert!(svm.decision(&[0.0]).abs() < 1e-6);
        assert!(svm.decision(&[0.3]) > 0.0 && svm.decision(&[-0.3]) < 0.0);
    }

    #[test]
    fn xor_is_solved() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = [true, true, false, false];
        let svm = fit_kernel_svm(&x, &y, 100.0, 2.0).unwrap();
        for (xi, yi) in x.iter().zip(y) {
            assert_eq!(svm.predict(xi), yi);
        }
    }

    #[test]
    fn separable_predictions_ignore_large_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let off = if i < 20 { -2.0 } else { 2.0 };
                vec![off + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]
            })
            .collect();
        let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let a = fit_kernel_svm(&x, &y, 10.0, 0.5).unwrap();
        let b = fit_kernel_svm(&x, &y, 1000.0, 0.5).unwrap();
        let probes: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random_range(-3.0..3.0), 0.0]).collect();
        for p in x.iter().chain(&probes).filter(|p| p[0].abs() > 1.0) {
            assert_eq!(a.predict(p), b.predict(p));
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0]; 4];
        assert!(fit_kernel_svm(&x, &[true; 4], 1.0, 1.0).is_err());
    }

    #[test]
    fn grid_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<bool> = x.iter().map(|p| p[0] + 0.3 * p[1] > 0.6).collect();
        let mut cs = C_GRID.to_vec();
        let mut gs = GAMMA_GRID.to_vec();
        let (_, a) = grid_search_svm(&x, &y, &cs, &gs, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        cs.reverse();
        gs.reverse();
        let (_, b) = grid_search_svm(&x, &y, &cs, &gs, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.cv_accuracy > 0.8);
    }
}
