use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{InputShape, Tensor};

/// Counts how many samples were read out of the datasets it is attached to.
#[derive(Debug, Clone, Default)]
pub struct AccessAudit(Arc<AtomicUsize>);

impl AccessAudit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }

    fn record(&self, n: usize) {
        self.0.fetch_add(n, Ordering::SeqCst);
    }
}

/// Labelled samples, flattened row-major into an `N × input_len` tensor.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    inputs: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    shape: InputShape,
    audit: Option<AccessAudit>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.inputs == other.inputs
            && self.labels == other.labels
            && self.num_classes == other.num_classes
            && self.shape == other.shape
    }
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        shape: InputShape,
    ) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::dim(format!("{} samples but {} labels", inputs.rows(), labels.len())));
        }
        if inputs.cols() != shape.len() && !labels.is_empty() {
            return Err(Error::dim(format!("samples of width {} for input shape {:?}", inputs.cols(), shape)));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::param(format!("label {bad} outside [0, {num_classes})")));
        }
        let inputs = inputs.reshape(vec![labels.len(), shape.len()])?;
        Ok(Dataset { name: name.into(), inputs, labels, num_classes, shape, audit: None })
    }

    /// Attaches an access counter; every sample read through [`inputs`],
    /// [`labels`], [`batch`] or [`subset`] is recorded.
    ///
    /// [`inputs`]: Dataset::inputs
    /// [`labels`]: Dataset::labels
    /// [`batch`]: Dataset::batch
    /// [`subset`]: Dataset::subset
    pub fn with_audit(mut self, audit: AccessAudit) -> Self {
        self.audit = Some(audit);
        self
    }

    fn touch(&self, n: usize) {
        if let Some(a) = &self.audit {
            a.record(n);
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_shape(&self) -> InputShape {
        self.shape
    }

    pub fn inputs(&self) -> &Tensor {
        self.touch(self.len());
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        self.touch(self.len());
        &self.labels
    }

    pub fn batch(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        self.touch(idx.len());
        (self.inputs.gather_rows(idx), idx.iter().map(|&i| self.labels[i]).collect())
    }

    /// Copy of the listed samples (without the audit counter).
    pub fn subset(&self, name: impl Into<String>, idx: &[usize]) -> Dataset {
        let (inputs, labels) = self.batch(idx);
        Dataset { name: name.into(), inputs, labels, num_classes: self.num_classes, shape: self.shape, audit: None }
    }

    /// Same samples with replaced labels.
    pub fn relabel(&self, labels: Vec<usize>) -> Result<Dataset> {
        Dataset::new(self.name.clone(), self.inputs.clone(), labels, self.num_classes, self.shape)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        self.labels.iter().for_each(|&y| c[y] += 1);
        c
    }
}

/// How a surrogate set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateKind {
    Structured,
    GaussianNoise,
    FileIngested,
}

/// Unlabelled out-of-distribution samples used in place of the retain set.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateDataset {
    samples: Tensor,
    kind: SurrogateKind,
    shape: InputShape,
}

impl SurrogateDataset {
    pub fn new(samples: Tensor, kind: SurrogateKind, shape: InputShape) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::param("surrogate dataset is empty"));
        }
        if samples.cols() != shape.len() {
            return Err(Error::dim("surrogate samples do not match the input shape"));
        }
        let n = samples.rows();
        Ok(SurrogateDataset { samples: samples.reshape(vec![n, shape.len()])?, kind, shape })
    }

    pub fn samples(&self) -> &Tensor {
        &self.samples
    }

    pub fn kind(&self) -> SurrogateKind {
        self.kind
    }

    pub fn input_shape(&self) -> InputShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First `n` samples (all of them when `n` exceeds the size).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        SurrogateDataset::new(self.samples.gather_rows(&idx), self.kind, self.shape)
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        SurrogateDataset::new(self.samples.gather_rows(idx), self.kind, self.shape)
    }
}
