use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Unlearning scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// A whole class is forgotten.
    Cr,
    /// A uniform 10% of the training samples is forgotten.
    Hr,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Cr => "cr",
            Scenario::Hr => "hr",
        })
    }
}

/// Test-side view of a split.
#[derive(Debug, Clone, PartialEq)]
pub enum TestSplit {
    /// Class removal: test set partitioned like the training set.
    ByClass { retain: Dataset, forget: Dataset },
    /// Homogeneous removal: the test set is left untouched.
    Whole(Dataset),
}

/// Training set partitioned into retain and forget parts, with the matching
/// test-side data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSplit {
    pub scenario: Scenario,
    /// Removed class (CR) or split seed (HR).
    pub provenance: u64,
    pub retain: Dataset,
    pub forget: Dataset,
    pub retain_indices: Vec<usize>,
    pub forget_indices: Vec<usize>,
    pub test: TestSplit,
}

impl ScenarioSplit {
    pub fn forget_test(&self) -> Option<&Dataset> {
        match &self.test {
            TestSplit::ByClass { forget, .. } => Some(forget),
            TestSplit::Whole(_) => None,
        }
    }

    pub fn retain_test(&self) -> Option<&Dataset> {
        match &self.test {
            TestSplit::ByClass { retain, .. } => Some(retain),
            TestSplit::Whole(_) => None,
        }
    }
}

fn partition_by_class(d: &Dataset, class: usize) -> (Vec<usize>, Vec<usize>) {
    (0..d.len()).partition(|&i| d.labels()[i] != class)
}

/// Class-removal split: every sample of `class` goes to the forget side, in
/// both the training and the test set.
pub fn split_cr(train: &Dataset, test: &Dataset, class: usize) -> Result<ScenarioSplit> {
    if class >= train.num_classes() || !train.labels().contains(&class) {
        return Err(Error::param(format!("class {class} is absent from the training set")));
    }
    let (retain_indices, forget_indices) = partition_by_class(train, class);
    let (test_retain, test_forget) = partition_by_class(test, class);
    Ok(ScenarioSplit {
        scenario: Scenario::Cr,
        provenance: class as u64,
        retain: train.subset(format!("{}-retain", train.name()), &retain_indices),
        forget: train.subset(format!("{}-forget", train.name()), &forget_indices),
        retain_indices,
        forget_indices,
        test: TestSplit::ByClass {
            retain: test.subset(format!("{}-retain", test.name()), &test_retain),
            forget: test.subset(format!("{}-forget", test.name()), &test_forget),
        },
    })
}

/// Fraction of the training set placed in the forget set under HR.
pub const HR_FORGET_FRACTION: f64 = 0.10;

/// Homogeneous-removal split: a seed-determined uniform 10% of the training
/// samples, regardless of class, forms the forget set.
pub fn split_hr(train: &Dataset, test: &Dataset, seed: u64) -> Result<ScenarioSplit> {
    if train.len() < 10 {
        return Err(Error::param("homogeneous removal needs at least 10 samples"));
    }
    let n_forget = (HR_FORGET_FRACTION * train.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut forget_indices = order[..n_forget].to_vec();
    let mut retain_indices = order[n_forget..].to_vec();
    forget_indices.sort_unstable();
    retain_indices.sort_unstable();
    Ok(ScenarioSplit {
        scenario: Scenario::Hr,
        provenance: seed,
        retain: train.subset(format!("{}-retain", train.name()), &retain_indices),
        forget: train.subset(format!("{}-forget", train.name()), &forget_indices),
        retain_indices,
        forget_indices,
        test: TestSplit::Whole(test.clone()),
    })
}

/// Class ids removed in the CR protocol: every `stride`-th class starting at
/// 0 (stride 10 for 100 classes), at most ten of them.
pub fn cr_protocol_classes(num_classes: usize) -> Vec<usize> {
    let stride = (num_classes / 10).max(1);
    (0..num_classes).step_by(stride).take(10).collect()
}

/// Seeds of the HR protocol.
pub const HR_PROTOCOL_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 42];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{InputShape, Tensor};

    fn counted(per_class: usize, k: usize) -> Dataset {
        let n = per_class * k;
        let inputs = Tensor::matrix(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let labels = (0..n).map(|i| i % k).collect();
        Dataset::new("d", inputs, labels, k, InputShape::Vector { dim: 1 }).unwrap()
    }

    #[test]
    fn cr_counts_and_merge() {
        let d = counted(10, 3);
        let s = split_cr(&d, &d, 0).unwrap();
        assert_eq!(s.forget.len(), 10);
        assert_eq!(s.retain.len(), 20);
        assert!(s.forget.labels().iter().all(|&y| y == 0));
        assert!(s.retain.labels().iter().all(|&y| y != 0));
        let mut merged: Vec<f64> = s.retain.inputs().data().iter().chain(s.forget.inputs().data()).copied().collect();
        merged.sort_by(f64::total_cmp);
        assert_eq!(merged, d.inputs().data());
        assert!(split_cr(&d, &d, 3).is_err());
    }

    #[test]
    fn hr_sizes_and_determinism() {
        let d = counted(100, 10);
        let a = split_hr(&d, &d, 7).unwrap();
        assert_eq!(a.forget.len(), 100);
        assert_eq!(a, split_hr(&d, &d, 7).unwrap());
        let mut seen = std::collections::HashSet::new();
        for seed in HR_PROTOCOL_SEEDS {
            let s = split_hr(&d, &d, seed).unwrap();
            assert!(seen.insert(s.forget_indices.clone()));
            let overlap = s.forget_indices.iter().filter(|i| s.retain_indices.binary_search(i).is_ok()).count();
            assert_eq!(overlap, 0);
        }
    }

    #[test]
    fn protocol_classes() {
        assert_eq!(cr_protocol_classes(100), vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90]);
        assert_eq!(cr_protocol_classes(200), vec![0, 20, 40, 60, 80, 100, 120, 140, 160, 180]);
        assert_eq!(cr_protocol_classes(10), (0..10).collect::<Vec<_>>());
    }
}
