//! Seeded synthetic datasets: Gaussian blobs, procedural shape images and
//! out-of-distribution surrogates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{Dataset, SurrogateDataset, SurrogateKind};
use crate::error::{Error, Result};
use crate::nn::{InputShape, Tensor};

/// Standard deviation of each coordinate of a blob center.
pub const BLOB_CENTER_SCALE: f64 = 1.0;

/// Fraction of blob samples drawn from the wide halo component.
pub const BLOB_HALO_FRACTION: f64 = 0.1;

/// Halo standard deviation as a multiple of the core spread.
pub const BLOB_HALO_SCALE: f64 = 4.0;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn blob_centers(k: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed, 0);
    (0..k).map(|_| (0..dim).map(|_| BLOB_CENTER_SCALE * normal(&mut r)).collect()).collect()
}

fn blob_samples(centers: &[Vec<f64>], n: usize, spread: f64, r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>) {
    let k = centers.len();
    let dim = centers[0].len();
    let mut data = Vec::with_capacity(n * k * dim);
    let mut labels = Vec::with_capacity(n * k);
    for i in 0..n * k {
        let c = i % k;
        // a minority of hard samples reaches into the neighbouring clusters
        let s = if r.random_bool(BLOB_HALO_FRACTION) { BLOB_HALO_SCALE * spread } else { spread };
        data.extend(centers[c].iter().map(|m| m + s * normal(r)));
        labels.push(c);
    }
    (data, labels)
}

fn check_blob_args(k: usize, dim: usize, spread: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::param("blobs need at least two classes"));
    }
    if dim == 0 || !(spread >= 0.0) {
        return Err(Error::param("blobs need dim > 0 and spread >= 0"));
    }
    Ok(())
}

/// `k` Gaussian clusters of `n` samples each, classes interleaved. Each
/// cluster is a tight core plus a wide halo around the same mean, so a
/// trained model fits the halo points it saw but misclassifies some unseen
/// ones; spread 0 collapses both onto the mean.
pub fn gen_blobs(k: usize, n: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    Ok(gen_blobs_split(k, n, 0, dim, spread, seed)?.0)
}

/// Training and test sets drawn from the same clusters.
pub fn gen_blobs_split(
    k: usize,
    n_train: usize,
    n_test: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    check_blob_args(k, dim, spread)?;
    let centers = blob_centers(k, dim, seed);
    let shape = InputShape::Vector { dim };
    let make = |n: usize, stream: u64, name: &str| {
        let (data, labels) = blob_samples(&centers, n, spread, &mut rng(seed, stream));
        Dataset::new(name, Tensor::matrix(n * k, dim, data)?, labels, k, shape)
    };
    Ok((make(n_train, 1, "blobs-train")?, make(n_test, 2, "blobs-test")?))
}

/// Blob centers, for nearest-mean baselines in tests.
pub fn blob_means(k: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    blob_centers(k, dim, seed)
}

/// Number of distinct shape classes [`gen_shapes`] can draw.
pub const SHAPE_CLASSES: usize = 8;

struct Canvas {
    size: usize,
    px: Vec<f64>,
}

impl Canvas {
    fn new(size: usize) -> Self {
        Canvas { size, px: vec![0.0; size * size] }
    }

    fn set(&mut self, y: isize, x: isize, v: f64) {
        let s = self.size as isize;
        if (0..s).contains(&y) && (0..s).contains(&x) {
            let p = &mut self.px[(y * s + x) as usize];
            *p = p.max(v);
        }
    }
}

fn draw_shape(class: usize, size: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let mut c = Canvas::new(size);
    let s = size;
    let ink = r.random_range(0.7..1.0);
    let cy = r.random_range(s / 4..=3 * s / 4) as isize;
    let cx = r.random_range(s / 4..=3 * s / 4) as isize;
    let half = r.random_range((s / 5).max(2)..=(s / 3).max(2)) as isize;
    match class {
        // horizontal bar
        0 => {
            for x in cx - half..=cx + half {
                c.set(cy, x, ink);
                c.set(cy + 1, x, ink);
            }
        }
        // vertical bar
        1 => {
            for y in cy - half..=cy + half {
                c.set(y, cx, ink);
                c.set(y, cx + 1, ink);
            }
        }
        // plus sign
        2 => {
            for t in -half..=half {
                c.set(cy, cx + t, ink);
                c.set(cy + t, cx, ink);
            }
        }
        // filled disk
        3 => {
            let rad = half as f64 * 0.8;
            for y in cy - half..=cy + half {
                for x in cx - half..=cx + half {
                    let d = (((y - cy).pow(2) + (x - cx).pow(2)) as f64).sqrt();
                    if d <= rad {
                        c.set(y, x, ink);
                    }
                }
            }
        }
        // main diagonal
        4 => {
            for t in -half..=half {
                c.set(cy + t, cx + t, ink);
            }
        }
        // hollow square
        5 => {
            for t in -half..=half {
                c.set(cy - half, cx + t, ink);
                c.set(cy + half, cx + t, ink);
                c.set(cy + t, cx - half, ink);
                c.set(cy + t, cx + half, ink);
            }
        }
        // anti-diagonal
        6 => {
            for t in -half..=half {
                c.set(cy + t, cx - t, ink);
            }
        }
        // X
        _ => {
            for t in -half..=half {
                c.set(cy + t, cx + t, ink);
                c.set(cy + t, cx - t, ink);
            }
        }
    }
    c.px
}

fn noisy_pixels(mut px: Vec<f64>, r: &mut ChaCha8Rng) -> Vec<f64> {
    for p in &mut px {
        *p = (*p + 0.05 * normal(r)).clamp(0.0, 1.0);
    }
    px
}

/// Single-channel `size × size` images of bars, crosses, disks, diagonals
/// and squares at random positions; `n` per class.
pub fn gen_shapes(k: usize, n: usize, size: usize, seed: u64) -> Result<Dataset> {
    Ok(gen_shapes_split(k, n, 0, size, seed)?.0)
}

pub fn gen_shapes_split(k: usize, n_train: usize, n_test: usize, size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(2..=SHAPE_CLASSES).contains(&k) {
        return Err(Error::param(format!("shape classes must lie in [2, {SHAPE_CLASSES}]")));
    }
    if size < 8 {
        return Err(Error::param("shape images must be at least 8x8"));
    }
    let shape = InputShape::Image { channels: 1, height: size, width: size };
    let make = |n: usize, stream: u64, name: &str| {
        let mut r = rng(seed, stream);
        let mut data = Vec::with_capacity(n * k * size * size);
        let mut labels = Vec::with_capacity(n * k);
        for i in 0..n * k {
            let class = i % k;
            let px = draw_shape(class, size, &mut r);
            data.extend(noisy_pixels(px, &mut r));
            labels.push(class);
        }
        Dataset::new(name, Tensor::matrix(n * k, size * size, data)?, labels, k, shape)
    };
    Ok((make(n_train, 1, "shapes-train")?, make(n_test, 2, "shapes-test")?))
}

/// Parameters of the i.i.d. Gaussian surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub mean: f64,
    pub std: f64,
}

impl NoiseParams {
    /// Zero-mean unit variance for vectors, mid-grey for images.
    pub fn default_for(shape: InputShape) -> Self {
        match shape {
            InputShape::Vector { .. } => NoiseParams { mean: 0.0, std: 1.0 },
            InputShape::Image { .. } => NoiseParams { mean: 0.5, std: 0.25 },
        }
    }
}

/// Surrogate of `n` samples: structured patterns from generator families
/// disjoint from the blob and shape generators, or i.i.d. Gaussian noise.
pub fn gen_surrogate(kind: SurrogateKind, n: usize, shape: InputShape, seed: u64) -> Result<SurrogateDataset> {
    if n == 0 {
        return Err(Error::param("surrogate size must be at least 1"));
    }
    let mut r = rng(seed, 7);
    let len = shape.len();
    let data = match (kind, shape) {
        (SurrogateKind::GaussianNoise, _) => {
            return gen_noise(n, shape, NoiseParams::default_for(shape), seed);
        }
        (SurrogateKind::Structured, InputShape::Vector { dim }) => sparse_atom_mixtures(n, dim, &mut r),
        (SurrogateKind::Structured, InputShape::Image { channels, height, width }) => {
            let mut out = Vec::with_capacity(n * len);
            for _ in 0..n {
                let plane = texture(height, width, &mut r);
                for _ in 0..channels {
                    out.extend_from_slice(&plane);
                }
            }
            out
        }
        (SurrogateKind::FileIngested, _) => {
            return Err(Error::param("file-ingested surrogates are loaded, not generated"));
        }
    };
    SurrogateDataset::new(Tensor::matrix(n, len, data)?, kind, shape)
}

pub fn gen_noise(n: usize, shape: InputShape, params: NoiseParams, seed: u64) -> Result<SurrogateDataset> {
    let mut r = rng(seed, 8);
    let len = shape.len();
    let data = (0..n * len).map(|_| params.mean + params.std * normal(&mut r)).collect();
    SurrogateDataset::new(Tensor::matrix(n, len, data)?, SurrogateKind::GaussianNoise, shape)
}

const ATOMS: usize = 48;
const ATOM_SUPPORT: usize = 4;

/// Sums of one to three sparse dictionary atoms with random gains.
fn sparse_atom_mixtures(n: usize, dim: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let support = ATOM_SUPPORT.min(dim);
    let atoms: Vec<Vec<(usize, f64)>> = (0..ATOMS)
        .map(|_| {
            (0..support)
                .map(|_| {
                    let v = r.random_range(0.8..1.6);
                    (r.random_range(0..dim), if r.random_bool(0.5) { v } else { -v })
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; n * dim];
    for row in out.chunks_mut(dim) {
        for _ in 0..r.random_range(1..=3) {
            let atom = &atoms[r.random_range(0..ATOMS)];
            let gain = r.random_range(0.5..1.5);
            for &(i, v) in atom {
                row[i] += gain * v;
            }
        }
        for v in row.iter_mut() {
            *v += 0.05 * normal(r);
        }
    }
    out
}

/// Rings, gratings, checkerboards or smooth gradients in `[0, 1]`.
fn texture(h: usize, w: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let family = r.random_range(0..4);
    let (cy, cx) = (r.random_range(0.0..h as f64), r.random_range(0.0..w as f64));
    let freq = r.random_range(0.4..1.6);
    let theta: f64 = r.random_range(0.0..std::f64::consts::PI);
    let cell = r.random_range(2..=4);
    let (a, b) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let mut px = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let v = match family {
                0 => {
                    let d = ((yf - cy).powi(2) + (xf - cx).powi(2)).sqrt();
                    0.5 + 0.5 * (freq * d).cos()
                }
                1 => 0.5 + 0.5 * (freq * (xf * theta.cos() + yf * theta.sin())).sin(),
                2 => {
                    if ((y / cell) + (x / cell)) % 2 == 0 {
                        0.85
                    } else {
                        0.15
                    }
                }
                _ => 0.5 + 0.5 * (a * (xf / w as f64 - 0.5) + b * (yf / h as f64 - 0.5)).tanh(),
            };
            px.push(v);
        }
    }
    noisy_pixels(px, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic() {
        let a = gen_blobs(3, 20, 5, 0.5, 9).unwrap();
        assert_eq!(a, gen_blobs(3, 20, 5, 0.5, 9).unwrap());
        assert_ne!(a, gen_blobs(3, 20, 5, 0.5, 10).unwrap());
        assert_eq!(a.len(), 60);
        assert!(gen_blobs(1, 20, 5, 0.5, 9).is_err());
    }

    #[test]
    fn zero_spread_blobs_sit_on_their_centers() {
        let d = gen_blobs(4, 10, 6, 0.0, 3).unwrap();
        let means = blob_means(4, 6, 3);
        for i in 0..d.len() {
            let (x, y) = d.batch(&[i]);
            let nearest = (0..4)
                .min_by(|&a, &b| {
                    let da: f64 = x.data().iter().zip(&means[a]).map(|(p, q)| (p - q).powi(2)).sum();
                    let db: f64 = x.data().iter().zip(&means[b]).map(|(p, q)| (p - q).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(nearest, y[0]);
        }
    }

    #[test]
    fn shapes_in_unit_range_and_deterministic() {
        let a = gen_shapes(8, 5, 12, 1).unwrap();
        assert!(a.inputs().data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, gen_shapes(8, 5, 12, 1).unwrap());
        assert!(gen_shapes(9, 5, 12, 1).is_err());
    }

    #[test]
    fn noise_mean_matches_configuration() {
        let shape = InputShape::Vector { dim: 16 };
        let p = NoiseParams { mean: 0.3, std: 2.0 };
        let s = gen_noise(500, shape, p, 4).unwrap();
        let m = s.samples().data().iter().sum::<f64>() / s.samples().len() as f64;
        let tol = 4.0 * p.std / ((500 * 16) as f64).sqrt();
        assert!((m - p.mean).abs() < tol, "{m}");
    }

    #[test]
    fn surrogates_are_deterministic() {
        for shape in [InputShape::Vector { dim: 32 }, InputShape::Image { channels: 1, height: 12, width: 12 }] {
            for kind in [SurrogateKind::Structured, SurrogateKind::GaussianNoise] {
                let a = gen_surrogate(kind, 50, shape, 11).unwrap();
                assert_eq!(a, gen_surrogate(kind, 50, shape, 11).unwrap());
                assert_eq!(a.kind(), kind);
            }
        }
        assert!(gen_surrogate(SurrogateKind::Structured, 0, InputShape::Vector { dim: 3 }, 0).is_err());
    }
}
