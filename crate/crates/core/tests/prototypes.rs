//! Prototype statistics checked against nalgebra.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scar::nn::Tensor;
use scar::prototypes::{
    mahalanobis, normalize_correlation, spd_inverse, tukey_transform, ClassPrototype, PrototypeSet, ShrinkageParams,
    TukeyParam,
};

mod common;
use common::{oracle_distance, random_proto, random_spd, to_na};

#[test]
fn wide_features_give_a_positive_definite_prototype() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n, d) = (100, 512);
    let x = Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let p = ClassPrototype::fit(0, &x, ShrinkageParams::new(3.0, 3.0).unwrap()).unwrap();
    let cov = to_na(&p.covariance);
    assert!(cov.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    let prod = &cov * to_na(&p.precision);
    assert!((prod - DMatrix::identity(d, d)).amax() <= 1e-8);
}

#[test]
fn mean_of_noisy_repeated_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (n, d) = (4000, 3);
    let point = [1.5, -0.5, 2.0];
    let normal = rand_distr::StandardNormal;
    let data: Vec<f64> = (0..n).flat_map(|_| point.map(|p| p + rng.sample::<f64, _>(normal))).collect();
    let p = ClassPrototype::fit(0, &Tensor::matrix(n, d, data).unwrap(), ShrinkageParams::default()).unwrap();
    for (m, want) in p.mean.iter().zip(point) {
        assert!((m - want).abs() <= 3.0 / (n as f64).sqrt());
    }
}

#[test]
fn nearest_wrong_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let d = 4;
    let set = PrototypeSet {
        prototypes: (0..3).map(|k| random_proto(k, d, &mut rng)).collect(),
        tukey: TukeyParam::new(1.0).unwrap(),
        shrinkage: ShrinkageParams::default(),
    };
    for _ in 0..100 {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let k = rng.random_range(0..3);
        let want = (0..3)
            .filter(|&i| i != k)
            .min_by(|&a, &b| {
                let da = oracle_distance(&v, &set.prototypes[a].mean, &set.prototypes[a].covariance);
                let db = oracle_distance(&v, &set.prototypes[b].mean, &set.prototypes[b].covariance);
                da.total_cmp(&db)
            })
            .unwrap();
        assert_eq!(set.nearest_wrong(&v, k).unwrap().class_id, want);
    }
}

#[test]
fn store_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let set = PrototypeSet {
        prototypes: (0..4).map(|k| random_proto(k, 5, &mut rng)).collect(),
        tukey: TukeyParam::new(0.5).unwrap(),
        shrinkage: ShrinkageParams::new(3.0, 3.0).unwrap(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    set.save(&path).unwrap();
    assert_eq!(PrototypeSet::load(&path).unwrap(), set);
}

fn spd_strategy() -> impl Strategy<Value = Tensor> {
    (1usize..7, any::<u64>()).prop_map(|(d, seed)| random_spd(d, &mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #[test]
    fn correlation_normalisation_is_idempotent(s in spd_strategy()) {
        let once = normalize_correlation(&s).unwrap();
        let twice = normalize_correlation(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        for i in 0..once.rows() {
            prop_assert!((once.at(i, i) - 1.0).abs() <= 1e-10);
            for j in 0..once.rows() {
                prop_assert_eq!(once.at(i, j), once.at(j, i));
            }
        }
    }

    #[test]
    fn inverse_is_a_two_sided_inverse(s in spd_strategy()) {
        let c = normalize_correlation(&s).unwrap();
        let p = spd_inverse(&c).unwrap();
        let d = c.rows();
        prop_assert!((to_na(&c) * to_na(&p) - DMatrix::identity(d, d)).amax() <= 1e-8);
    }

    #[test]
    fn distance_is_zero_only_at_the_mean(
        seed in any::<u64>(),
        shift in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_proto(0, 3, &mut rng);
        prop_assert_eq!(mahalanobis(&p.mean, &p).unwrap(), 0.0);
        let v: Vec<f64> = p.mean.iter().zip(&shift).map(|(m, s)| m + s).collect();
        let d = mahalanobis(&v, &p).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d == 0.0, shift.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn tukey_preserves_sign_and_order(
        xs in prop::collection::vec(-50.0f64..50.0, 1..20),
        delta in 0.05f64..=1.0,
    ) {
        let t = Tensor::new(vec![xs.len()], xs.clone()).unwrap();
        let y = tukey_transform(&t, TukeyParam::new(delta).unwrap());
        for (a, b) in xs.iter().zip(y.data()) {
            prop_assert_eq!(*a > 0.0, *b > 0.0);
            prop_assert_eq!(*a < 0.0, *b < 0.0);
            prop_assert!((b.abs() - a.abs().powf(delta)).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
