use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    cr_protocol_classes, gen_blobs_split, gen_shapes_split, gen_surrogate, load_cifar_binary, Dataset, Scenario,
    SurrogateDataset, SurrogateKind, HR_PROTOCOL_SEEDS,
};
use crate::nn::{Architecture, InputShape};
use crate::unlearn::{DistillConfig, TrainConfig, UnlearnConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Scar,
    ScarSelfForget,
    Retrain,
    Finetune,
    NegGrad,
    RandomLabels,
    DistillTrickCheck,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Scar,
        Method::ScarSelfForget,
        Method::Retrain,
        Method::Finetune,
        Method::NegGrad,
        Method::RandomLabels,
        Method::DistillTrickCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Scar => "scar",
            Method::ScarSelfForget => "scar-self-forget",
            Method::Retrain => "retrain",
            Method::Finetune => "finetune",
            Method::NegGrad => "neg-grad",
            Method::RandomLabels => "random-labels",
            Method::DistillTrickCheck => "distill-trick-check",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }

    /// Methods that consume surrogate data, and so take part in size sweeps.
    pub fn uses_surrogate(self) -> bool {
        matches!(self, Method::Scar | Method::ScarSelfForget | Method::DistillTrickCheck)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs {
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        dim: usize,
        spread: f64,
        seed: u64,
    },
    Shapes {
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        size: usize,
        seed: u64,
    },
    /// CIFAR-10 binary batches.
    Cifar {
        train: PathBuf,
        test: PathBuf,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Blobs { classes: 8, train_per_class: 250, test_per_class: 100, dim: 32, spread: 0.5, seed: 42 }
    }
}

impl DatasetSpec {
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSpec::Blobs { classes, train_per_class, test_per_class, dim, spread, seed } => {
                gen_blobs_split(*classes, *train_per_class, *test_per_class, *dim, *spread, *seed)
            }
            DatasetSpec::Shapes { classes, train_per_class, test_per_class, size, seed } => {
                gen_shapes_split(*classes, *train_per_class, *test_per_class, *size, *seed)
            }
            DatasetSpec::Cifar { train, test } => Ok((load_cifar_binary(train)?, load_cifar_binary(test)?)),
        }
    }

    /// Vector data gets the MLP backbone, images the small CNN.
    pub fn architecture(&self, shape: InputShape, classes: usize) -> Architecture {
        match shape {
            InputShape::Vector { dim } => Architecture::mlp(dim, classes),
            InputShape::Image { channels, height, width } => Architecture::small_cnn(channels, height, width, classes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateSource {
    Structured,
    GaussianNoise,
    /// Inputs of a CIFAR-format binary file; labels are discarded.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSpec {
    pub kind: SurrogateSource,
    pub size: usize,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec { kind: SurrogateSource::Structured, size: 5000, seed: 7, path: None }
    }
}

impl SurrogateSpec {
    pub fn load(&self, shape: InputShape) -> Result<SurrogateDataset> {
        match self.kind {
            SurrogateSource::Structured => gen_surrogate(SurrogateKind::Structured, self.size, shape, self.seed),
            SurrogateSource::GaussianNoise => gen_surrogate(SurrogateKind::GaussianNoise, self.size, shape, self.seed),
            SurrogateSource::File => {
                let path = self.path.as_ref().ok_or_else(|| Error::Config("file surrogate needs `path`".into()))?;
                let d = load_cifar_binary(path)?;
                if d.input_shape() != shape {
                    return Err(Error::Config(format!(
                        "surrogate file {} does not match the dataset input shape",
                        path.display()
                    )));
                }
                let s = SurrogateDataset::new(d.inputs().clone(), SurrogateKind::FileIngested, shape)?;
                s.truncated(self.size.min(s.len()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub mia: bool,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { mia: true, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillCheckSpec {
    pub epochs: usize,
    #[serde(flatten)]
    pub config: DistillConfig,
}

impl Default for DistillCheckSpec {
    fn default() -> Self {
        DistillCheckSpec { epochs: 20, config: DistillConfig::default() }
    }
}

/// Contents of an experiment file. The `[unlearn]` table holds overrides on
/// top of the preset for the scenario and method, so it may be partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Removed classes (CR) or split seeds (HR); empty means the protocol
    /// default.
    #[serde(default)]
    pub runs: Vec<u64>,
    #[serde(default)]
    pub sweep_surrogate_sizes: Vec<usize>,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub surrogate: SurrogateSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub unlearn: toml::Table,
    /// Fine-tuning recipe; defaults to the training recipe over 30 epochs.
    #[serde(default)]
    pub finetune: Option<TrainConfig>,
    #[serde(default)]
    pub distill_check: DistillCheckSpec,
    #[serde(default)]
    pub eval: EvalSpec,
}

fn default_method() -> Method {
    Method::Scar
}

pub const FINETUNE_EPOCHS: usize = 30;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::Io(e),
        })?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Method::ScarSelfForget && self.scenario != Scenario::Cr {
            return Err(Error::Config("scar-self-forget only applies to class removal".into()));
        }
        if self.surrogate.size == 0 || self.sweep_surrogate_sizes.contains(&0) {
            return Err(Error::Config("surrogate sizes must be positive".into()));
        }
        self.train.validate().map_err(to_config)?;
        self.finetune_config().validate().map_err(to_config)?;
        for m in [Method::Scar, Method::ScarSelfForget, Method::NegGrad] {
            self.unlearn_config(m)?;
        }
        Ok(())
    }

    /// Preset for the scenario (and self-forget), with `[unlearn]` applied.
    pub fn unlearn_config(&self, method: Method) -> Result<UnlearnConfig> {
        let preset = match (self.scenario, method) {
            (Scenario::Cr, Method::ScarSelfForget) => UnlearnConfig::self_forget(),
            (Scenario::Cr, _) => UnlearnConfig::cr(),
            (Scenario::Hr, _) => UnlearnConfig::hr(),
        };
        let mut table = toml::Table::try_from(&preset).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in &self.unlearn {
            table.insert(k.clone(), v.clone());
        }
        let cfg: UnlearnConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if cfg.scenario != self.scenario {
            return Err(Error::Config("[unlearn] scenario disagrees with the experiment".into()));
        }
        cfg.validate().map_err(to_config)?;
        Ok(cfg)
    }

    pub fn finetune_config(&self) -> TrainConfig {
        self.finetune.clone().unwrap_or(TrainConfig { epochs: FINETUNE_EPOCHS, ..self.train.clone() })
    }

    pub fn run_ids(&self, num_classes: usize) -> Result<Vec<u64>> {
        if !self.runs.is_empty() {
            if self.scenario == Scenario::Cr {
                if let Some(&c) = self.runs.iter().find(|&&c| c as usize >= num_classes) {
                    return Err(Error::Config(format!("run class {c} outside [0, {num_classes})")));
                }
            }
            return Ok(self.runs.clone());
        }
        Ok(match self.scenario {
            Scenario::Cr => cr_protocol_classes(num_classes).into_iter().map(|c| c as u64).collect(),
            Scenario::Hr => HR_PROTOCOL_SEEDS.to_vec(),
        })
    }

    /// Overrides the training and unlearning seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        if let Some(f) = self.finetune.as_mut() {
            f.seed = seed;
        }
        self.distill_check.config.seed = seed;
        self.unlearn.insert("seed".into(), toml::Value::Integer(seed as i64));
    }

    /// Digest of everything that determines the original model and the
    /// per-run artifacts. Method, run list, sweep sizes and output directory
    /// are left out because artifacts are already namespaced by them.
    pub fn hash(&self) -> String {
        let key = serde_json::json!({
            "scenario": self.scenario,
            "dataset": self.dataset,
            "surrogate": self.surrogate,
            "train": self.train,
            "unlearn": self.unlearn,
            "finetune": self.finetune,
            "distill_check": self.distill_check,
            "eval": self.eval,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

fn to_config(e: Error) -> Error {
    match e {
        Error::Parameter(m) => Error::Config(m),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_presets() {
        let cfg = ExperimentConfig::from_toml("scenario = \"cr\"").unwrap();
        assert_eq!(cfg.method, Method::Scar);
        assert_eq!(cfg.unlearn_config(Method::Scar).unwrap(), UnlearnConfig::cr());
        assert_eq!(cfg.run_ids(8).unwrap().len(), 8);
        assert_eq!(cfg.run_ids(100).unwrap(), (0..100).step_by(10).collect::<Vec<u64>>());
    }

    #[test]
    fn partial_tables_keep_the_remaining_defaults() {
        let text = "scenario = \"cr\"\n[eval]\nmia = false\n[surrogate]\nsize = 300\n[train]\nepochs = 3\n[distill_check]\nlr = 0.01\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.eval, EvalSpec { mia: false, ..EvalSpec::default() });
        assert_eq!(cfg.surrogate, SurrogateSpec { size: 300, ..SurrogateSpec::default() });
        assert_eq!(cfg.train, TrainConfig { epochs: 3, ..TrainConfig::default() });
        assert_eq!(cfg.distill_check.config.lr, 0.01);
        assert_eq!(cfg.distill_check.epochs, DistillCheckSpec::default().epochs);
        assert!(ExperimentConfig::from_toml("scenario = \"cr\"\n[eval]\nbogus = 1\n").is_err());
    }

    #[test]
    fn partial_override() {
        let cfg = ExperimentConfig::from_toml("scenario = \"hr\"\n[unlearn]\nlr = 0.01\n").unwrap();
        let u = cfg.unlearn_config(Method::Scar).unwrap();
        assert_eq!(u.lr, 0.01);
        assert_eq!(u.distill_weight, UnlearnConfig::hr().distill_weight);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "scenario = \"hr\"\nmethod = \"scar-self-forget\"",
            "scenario = \"cr\"\n[unlearn]\nbogus = 1",
            "scenario = \"cr\"\n[unlearn]\ntemperature = -1.0",
            "scenario = \"cr\"\nmethod = \"nope\"",
            "scenario = \"cr\"\nwhat = 3",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_method_and_tracks_recipe() {
        let a = ExperimentConfig::from_toml("scenario = \"cr\"").unwrap();
        let mut b = a.clone();
        b.method = Method::NegGrad;
        assert_eq!(a.hash(), b.hash());
        b.set_seed(3);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
    }
}
