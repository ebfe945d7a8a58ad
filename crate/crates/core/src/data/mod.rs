//! Datasets, CR/HR splits, synthetic generators and surrogate data.

mod cifar;
mod dataset;
mod ks;
mod split;
mod synth;

pub use cifar::{load_cifar_binary, parse_cifar_binary, CIFAR_CLASSES, CIFAR_RECORD};
pub use dataset::{AccessAudit, Dataset, SurrogateDataset, SurrogateKind};
pub use ks::{ks_test, KsResult};
pub use split::{
    cr_protocol_classes, split_cr, split_hr, Scenario, ScenarioSplit, TestSplit, HR_FORGET_FRACTION, HR_PROTOCOL_SEEDS,
};
pub use synth::{
    blob_means, gen_blobs, gen_blobs_split, gen_noise, gen_shapes, gen_shapes_split, gen_surrogate, NoiseParams,
    BLOB_CENTER_SCALE, BLOB_HALO_FRACTION, BLOB_HALO_SCALE, SHAPE_CLASSES,
};
