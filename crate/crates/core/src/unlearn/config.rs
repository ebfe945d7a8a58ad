use serde::{Deserialize, Serialize};

use crate::data::Scenario;
use crate::error::{Error, Result};
use crate::prototypes::{ShrinkageParams, TukeyParam};

/// Forget-accuracy level at or below which unlearning stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Fixed(f64),
    /// The original model's test accuracy, measured once before unlearning.
    Named(ThresholdRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    OriginalTestAccuracy,
}

impl Threshold {
    pub const ORIGINAL_TEST: Threshold = Threshold::Named(ThresholdRule::OriginalTestAccuracy);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnConfig {
    pub scenario: Scenario,
    /// Weight of the Mahalanobis forget loss.
    pub forget_weight: f64,
    /// Weight of the surrogate distillation loss.
    pub distill_weight: f64,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub forget_batch: usize,
    pub surrogate_batch: usize,
    /// Teacher-side softmax temperature.
    pub temperature: f64,
    pub tukey: TukeyParam,
    pub shrinkage: ShrinkageParams,
    pub threshold: Threshold,
    pub max_epochs: usize,
    pub seed: u64,
}

impl UnlearnConfig {
    /// Class-removal defaults.
    pub fn cr() -> Self {
        UnlearnConfig {
            scenario: Scenario::Cr,
            forget_weight: 1.0,
            distill_weight: 5.0,
            lr: 5e-4,
            weight_decay: 0.0,
            forget_batch: 1024,
            surrogate_batch: 1024,
            temperature: 1.0,
            tukey: TukeyParam::new(0.5).expect("valid"),
            shrinkage: ShrinkageParams::default(),
            threshold: Threshold::Fixed(0.0),
            max_epochs: 30,
            seed: 42,
        }
    }

    /// Homogeneous-removal defaults.
    pub fn hr() -> Self {
        UnlearnConfig {
            scenario: Scenario::Hr,
            distill_weight: 8.0,
            temperature: 5.0,
            tukey: TukeyParam::new(1.0).expect("valid"),
            threshold: Threshold::ORIGINAL_TEST,
            ..Self::cr()
        }
    }

    /// Defaults for unlearning without access to the forget set.
    pub fn self_forget() -> Self {
        UnlearnConfig { lr: 7.5e-4, temperature: 2.0, max_epochs: 25, ..Self::cr() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::param(m.to_string()));
        if !(self.forget_weight >= 0.0 && self.distill_weight >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.lr >= 0.0 && self.weight_decay >= 0.0) {
            return bad("learning rate and weight decay must be non-negative");
        }
        if self.forget_batch == 0 || self.surrogate_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if let Threshold::Fixed(e) = self.threshold {
            if !(0.0..=1.0).contains(&e) {
                return bad("threshold must lie in [0, 1]");
            }
        }
        self.shrinkage.validate()
    }
}

/// Supervised training settings for original, retrained and fine-tuned models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, batch_size: 64, lr: 1e-3, weight_decay: 5e-4, seed: 42 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be positive"));
        }
        if !(self.lr >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::param("learning rate and weight decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Threshold,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub forget_loss: f64,
    pub distill_loss: f64,
    /// Accuracy on the set that drives stopping.
    pub forget_accuracy: f64,
    pub test_accuracy: Option<f64>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnHistory {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// Resolved stop threshold; `None` when the run has a fixed epoch budget.
    pub threshold: Option<f64>,
}

impl UnlearnHistory {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn final_forget_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.forget_accuracy)
    }

    pub fn wall_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.wall_seconds).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for c in [UnlearnConfig::cr(), UnlearnConfig::hr(), UnlearnConfig::self_forget()] {
            c.validate().unwrap();
        }
        let mut c = UnlearnConfig::cr();
        c.temperature = 0.0;
        assert!(c.validate().is_err());
        c = UnlearnConfig::cr();
        c.max_epochs = 0;
        assert!(c.validate().is_err());
        c = UnlearnConfig::cr();
        c.threshold = Threshold::Fixed(1.5);
        assert!(c.validate().is_err());
    }

    #[test]
    fn threshold_serde() {
        let t: Threshold = serde_json::from_str("\"original-test-accuracy\"").unwrap();
        assert_eq!(t, Threshold::ORIGINAL_TEST);
        let t: Threshold = serde_json::from_str("0.25").unwrap();
        assert_eq!(t, Threshold::Fixed(0.25));
    }

    #[test]
    fn config_toml_round_trip() {
        let c = UnlearnConfig::hr();
        let s = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<UnlearnConfig>(&s).unwrap(), c);
    }
}
