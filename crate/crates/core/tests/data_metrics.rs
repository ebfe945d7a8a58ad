//! Scenario splits, generators, the KS test and the evaluation metrics.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scar::data::{
    blob_means, gen_blobs, gen_blobs_split, gen_noise, gen_shapes_split, gen_surrogate, ks_test, split_cr, split_hr,
    Dataset, NoiseParams, Scenario, SurrogateKind, HR_PROTOCOL_SEEDS,
};
use scar::eval::{accuracy, aggregate, aus, mean_std, mia_chance, mia_on_outputs, AccuracyReport, MetricsReport};
use scar::nn::{Architecture, InputShape, Model, Tensor};
use scar::unlearn::{train_original, TrainConfig};

fn multiset(d: &Dataset, idx: &[usize]) -> Vec<(Vec<u64>, usize)> {
    let mut v: Vec<_> =
        idx.iter().map(|&i| (d.inputs().row(i).iter().map(|x| x.to_bits()).collect(), d.labels()[i])).collect();
    v.sort();
    v
}

fn assert_partition(d: &Dataset, retain: &[usize], forget: &[usize]) {
    let mut all: Vec<usize> = retain.iter().chain(forget).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn cr_split_is_a_class_partition(k in 2usize..6, n in 2usize..12, c in 0usize..6, seed in any::<u64>()) {
        prop_assume!(c < k);
        let (train, test) = gen_blobs_split(k, n, 3, 2, 0.5, seed).unwrap();
        let s = split_cr(&train, &test, c).unwrap();
        assert_partition(&train, &s.retain_indices, &s.forget_indices);
        prop_assert_eq!(s.forget.len(), n);
        prop_assert!(s.forget.labels().iter().all(|&y| y == c));
        prop_assert!(s.retain.labels().iter().all(|&y| y != c));
        prop_assert!(s.forget_test().unwrap().labels().iter().all(|&y| y == c));
        prop_assert!(s.retain_test().unwrap().labels().iter().all(|&y| y != c));
        let mut merged = multiset(&train, &s.retain_indices);
        merged.extend(multiset(&train, &s.forget_indices));
        merged.sort();
        prop_assert_eq!(merged, multiset(&train, &(0..train.len()).collect::<Vec<_>>()));
    }

    #[test]
    fn hr_split_takes_a_tenth(k in 2usize..5, n in 5usize..60, seed in any::<u64>()) {
        let (train, test) = gen_blobs_split(k, n, 2, 2, 0.5, 1).unwrap();
        let s = split_hr(&train, &test, seed).unwrap();
        assert_partition(&train, &s.retain_indices, &s.forget_indices);
        prop_assert_eq!(s.forget.len(), (0.1 * train.len() as f64).round() as usize);
    }
}

#[test]
fn cr_counts_and_missing_class() {
    let (train, test) = gen_blobs_split(3, 10, 4, 2, 0.5, 0).unwrap();
    let s = split_cr(&train, &test, 0).unwrap();
    assert_eq!((s.forget.len(), s.retain.len()), (10, 20));
    assert!(split_cr(&train, &test, 3).is_err());
}

#[test]
fn hr_protocol_seeds_give_distinct_splits() {
    let (train, test) = gen_blobs_split(10, 100, 2, 2, 0.5, 0).unwrap();
    let splits: Vec<Vec<usize>> = HR_PROTOCOL_SEEDS
        .iter()
        .map(|&s| {
            let a = split_hr(&train, &test, s).unwrap().forget_indices;
            assert_eq!(a, split_hr(&train, &test, s).unwrap().forget_indices);
            assert_eq!(a.len(), 100);
            a
        })
        .collect();
    for i in 0..splits.len() {
        for j in 0..i {
            assert_ne!(splits[i], splits[j]);
        }
    }
}

#[test]
fn generators_are_deterministic() {
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let a = gen_blobs(4, 20, 5, 0.5, 9).unwrap();
    let b = gen_blobs(4, 20, 5, 0.5, 9).unwrap();
    assert_eq!(bits(a.inputs()), bits(b.inputs()));
    assert_eq!(a.labels(), b.labels());
    let shape = InputShape::Image { channels: 3, height: 8, width: 8 };
    for kind in [SurrogateKind::Structured, SurrogateKind::GaussianNoise] {
        let x = gen_surrogate(kind, 30, shape, 4).unwrap();
        let y = gen_surrogate(kind, 30, shape, 4).unwrap();
        assert_eq!(bits(x.samples()), bits(y.samples()));
    }
}

#[test]
fn collapsed_blobs_are_separable_by_nearest_mean() {
    let d = gen_blobs(5, 30, 6, 0.0, 3).unwrap();
    let means = blob_means(5, 6, 3);
    let correct = (0..d.len())
        .filter(|&i| {
            let x = d.inputs().row(i);
            let dist = |m: &Vec<f64>| x.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..5).min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b]))).unwrap();
            best == d.labels()[i]
        })
        .count();
    assert_eq!(correct, d.len());
}

#[test]
fn desk_blob_model_is_accurate() {
    let (train, test) = gen_blobs_split(8, 250, 100, 32, 0.5, 42).unwrap();
    let m = train_original(&train, &Architecture::mlp(32, 8), &TrainConfig::default()).unwrap();
    let a = accuracy(&m, &test).unwrap();
    assert!(a >= 0.9, "test accuracy {a}");
}

#[test]
fn desk_shape_model_is_accurate() {
    let (train, test) = gen_shapes_split(8, 250, 50, 16, 42).unwrap();
    assert!(train.inputs().data().iter().all(|v| (0.0..=1.0).contains(v)));
    let InputShape::Image { channels, height, width } = train.input_shape() else { panic!("shapes are images") };
    let arch = Architecture::small_cnn(channels, height, width, 8);
    let m = train_original(&train, &arch, &TrainConfig::default()).unwrap();
    let a = accuracy(&m, &test).unwrap();
    assert!(a >= 0.85, "test accuracy {a}");
}

#[test]
fn noise_mean_matches_configuration() {
    let shape = InputShape::Image { channels: 1, height: 8, width: 8 };
    let p = NoiseParams { mean: 0.3, std: 0.2 };
    let s = gen_noise(500, shape, p, 1).unwrap();
    let m = s.samples().data().iter().sum::<f64>() / s.samples().len() as f64;
    assert!((m - 0.3).abs() <= 4.0 * 0.2 / (s.samples().len() as f64).sqrt());
}

#[test]
fn structured_surrogate_is_out_of_distribution() {
    let (train, _) = gen_blobs_split(8, 250, 10, 32, 0.5, 42).unwrap();
    let sur = gen_surrogate(SurrogateKind::Structured, 5000, train.input_shape(), 7).unwrap();
    let k = ks_test(train.inputs().data(), sur.samples().data()).unwrap();
    assert!(k.p_value < 1e-3, "p = {}", k.p_value);
}

fn ecdf_distance(a: &[f64], b: &[f64]) -> f64 {
    // evaluate both empirical CDFs at every observed point
    let cdf = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x <= t).count() as f64 / xs.len() as f64;
    a.iter().chain(b).map(|&t| (cdf(a, t) - cdf(b, t)).abs()).fold(0.0, f64::max)
}

#[test]
fn ks_against_empirical_cdf_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let a: Vec<f64> = (0..10000).map(|_| rng.random_range(0.0..1.0)).collect();
    let b: Vec<f64> = (0..10000).map(|_| rng.random_range(0.5..1.5)).collect();
    let k = ks_test(&a, &b).unwrap();
    assert!((k.statistic - 0.5).abs() < 0.02);
    assert!(k.p_value < 1e-6);

    let small_a: Vec<f64> = a[..300].to_vec();
    let small_b: Vec<f64> = (0..200).map(|_| rng.random_range(0.2..1.1)).collect();
    let k = ks_test(&small_a, &small_b).unwrap();
    assert!((k.statistic - ecdf_distance(&small_a, &small_b)).abs() < 1e-12);
    let warped = |v: &[f64]| v.iter().map(|x| (3.0 * x).exp() - 7.0).collect::<Vec<_>>();
    let w = ks_test(&warped(&small_a), &warped(&small_b)).unwrap();
    assert_eq!(w.statistic, k.statistic);

    let same = ks_test(&small_a, &small_a).unwrap();
    assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
    assert!(ks_test(&[], &small_a).is_err());
}

#[test]
fn accuracy_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let model = Model::new(Architecture::mlp(4, 3), 8).unwrap();
    let x = Tensor::matrix(200, 4, (0..800).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
    let d = Dataset::new("r", x.clone(), labels.clone(), 3, InputShape::Vector { dim: 4 }).unwrap();
    let logits = model.logits(&x).unwrap();
    let hits = (0..200)
        .filter(|&i| {
            let r = logits.row(i);
            (0..3).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap() == labels[i]
        })
        .count();
    assert_eq!(accuracy(&model, &d).unwrap(), hits as f64 / 200.0);

    // constant output on balanced classes
    let mut constant = Model::new(Architecture::mlp(4, 3), 8).unwrap();
    let n = constant.params().len();
    for t in constant.params_mut().iter_mut().take(n - 1) {
        t.data_mut().fill(0.0);
    }
    constant.params_mut()[n - 1].data_mut().copy_from_slice(&[0.0, 1.0, 0.0]);
    let balanced =
        Dataset::new("b", x.gather_rows(&[0, 1, 2, 3, 4, 5]), vec![0, 1, 2, 0, 1, 2], 3, InputShape::Vector { dim: 4 })
            .unwrap();
    assert_eq!(accuracy(&constant, &balanced).unwrap(), 1.0 / 3.0);
}

#[test]
fn aus_is_monotone_on_grids() {
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    for &a_or in &grid[1..] {
        assert_eq!(aus(a_or, a_or, 0.0, Scenario::Cr).unwrap(), 1.0);
        for &a_f in &grid {
            for w in grid.windows(2) {
                assert!(aus(a_or, w[1], a_f, Scenario::Cr).unwrap() > aus(a_or, w[0], a_f, Scenario::Cr).unwrap());
                // in HR the gap |a_t − a_f| also grows with a_t; the numerator
                // outpaces it only while a_f stays below a_or
                if a_f < a_or {
                    assert!(aus(a_or, w[1], a_f, Scenario::Hr).unwrap() > aus(a_or, w[0], a_f, Scenario::Hr).unwrap());
                }
                // with the outer value as a_t, forget accuracy steps from w[0] to w[1]
                let a_t = a_f;
                if 1.0 - (a_or - a_t) > 0.0 {
                    assert!(aus(a_or, a_t, w[1], Scenario::Cr).unwrap() < aus(a_or, a_t, w[0], Scenario::Cr).unwrap());
                }
            }
        }
    }
    assert!(aus(0.5, 0.5, -0.1, Scenario::Cr).is_err());
}

#[test]
fn aggregate_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let runs: Vec<MetricsReport> = (0..10)
        .map(|i| {
            let acc = AccuracyReport {
                scenario: Scenario::Cr,
                test: rng.random_range(0.5..1.0),
                forget: rng.random_range(0.0..0.5),
            };
            let mut r = MetricsReport::new("m", i, 0.9, acc).unwrap();
            r.mia_f1 = Some(rng.random_range(0.4..0.8));
            r.epochs = rng.random_range(1..30);
            r
        })
        .collect();
    let s = aggregate(&runs).unwrap();
    let check = |got: scar::eval::MeanStd, v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
        assert!((got.mean - m).abs() <= 1e-12 && (got.std - sd).abs() <= 1e-12);
    };
    check(s.aus, runs.iter().map(|r| r.aus).collect());
    check(s.test, runs.iter().map(|r| r.test).collect());
    check(s.forget, runs.iter().map(|r| r.forget).collect());
    check(s.mia_f1.unwrap(), runs.iter().map(|r| r.mia_f1.unwrap()).collect());
    check(s.epochs, runs.iter().map(|r| r.epochs as f64).collect());
    let one = mean_std(&[0.42]);
    assert_eq!(one.std, 0.0);
    let two = mean_std(&[0.9, 1.1]);
    assert!((two.mean - 1.0).abs() < 1e-12 && (two.std - 0.1).abs() < 1e-12);
    assert!(aggregate(&[]).is_err());
}

fn softmax_rows(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0f64..2.0).exp()).collect();
            let s: f64 = z.iter().sum();
            z.iter().map(|v| v / s).collect()
        })
        .collect()
}

#[test]
fn mia_separable_pools() {
    let members: Vec<Vec<f64>> =
        (0..60).map(|i| (0..4).map(|j| if j == i % 4 { 1.0 } else { 0.0 }).collect()).collect();
    let non: Vec<Vec<f64>> = (0..60).map(|_| vec![0.25; 4]).collect();
    for s in [Scenario::Hr, Scenario::Cr] {
        let r = mia_on_outputs(&members, &non, s, 3).unwrap();
        assert!(r.f1_mean >= 0.99, "{s:?}: {}", r.f1_mean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    assert!(mia_on_outputs(&softmax_rows(9, 4, &mut rng), &non, Scenario::Hr, 0).is_err());
    assert_eq!(mia_chance(Scenario::Hr), 0.5);
    assert_eq!(mia_chance(Scenario::Cr), 0.75);
}
