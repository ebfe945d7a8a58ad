//! SCAR unlearning, its self-forget variant, the distillation-only check and
//! the baseline unlearners.

mod config;
mod losses;
mod scar;
mod training;

pub use config::{EpochRecord, StopReason, Threshold, ThresholdRule, TrainConfig, UnlearnConfig, UnlearnHistory};
pub use losses::{distillation_loss, forget_loss, objective, objective_gradients, LossParts};
pub use scar::{scar_unlearn, self_forget_partition, ForgetSource, SelfForgetPartition};
pub use training::{
    baseline_finetune, baseline_negative_gradient, baseline_random_labels, baseline_retrain, cross_entropy_gradients,
    distillation_trick_train, random_wrong_labels, train_classifier, train_original, DistillConfig,
};
