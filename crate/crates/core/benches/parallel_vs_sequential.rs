//! Sequential against rayon execution on the two data-parallel hot spots:
//! per-class prototype fitting and nearest-wrong-prototype search.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scar::nn::Tensor;
use scar::par::{map_range_with, Execution};
use scar::prototypes::{ClassPrototype, PrototypeSet, ShrinkageParams, TukeyParam};

const CLASSES: usize = 10;
const DIM: usize = 64;

fn features(n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(n, DIM, (0..n * DIM).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn prototype_fit(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let per_class: Vec<Tensor> = (0..CLASSES).map(|_| features(500, &mut rng)).collect();
    let shrink = ShrinkageParams::default();
    let mut g = c.benchmark_group("prototype_fit");
    for (name, mode) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                map_range_with(mode, CLASSES, |k| ClassPrototype::fit(k, black_box(&per_class[k]), shrink).unwrap())
            })
        });
    }
    g.finish();
}

fn nearest_wrong(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let set = PrototypeSet {
        prototypes: (0..CLASSES)
            .map(|k| ClassPrototype::fit(k, &features(200, &mut rng), ShrinkageParams::default()).unwrap())
            .collect(),
        tukey: TukeyParam::new(1.0).unwrap(),
        shrinkage: ShrinkageParams::default(),
    };
    let x = features(2048, &mut rng);
    let labels: Vec<usize> = (0..x.rows()).map(|i| i % CLASSES).collect();
    let mut g = c.benchmark_group("nearest_wrong");
    for (name, mode) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                map_range_with(mode, x.rows(), |i| set.nearest_wrong(black_box(x.row(i)), labels[i]).unwrap().class_id)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, prototype_fit, nearest_wrong);
criterion_main!(benches);
