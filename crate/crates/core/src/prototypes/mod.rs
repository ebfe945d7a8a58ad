//! Per-class feature-distribution prototypes and Mahalanobis queries.
//!
//! A prototype stores the mean of a class's Tukey-transformed backbone
//! features and the inverse of its shrunk, correlation-normalised
//! covariance. Raw samples are never retained.
//!
//! Covariances are processed as raw → shrinkage → correlation
//! normalisation → inversion.

mod linalg;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{quad_form, signed_pow, Container, Model, Tensor};
use crate::par;

pub use linalg::{cholesky, covariance, spd_inverse};

/// Exponent of the element-wise power transform, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TukeyParam(f64);

impl TukeyParam {
    pub fn new(delta: f64) -> Result<Self> {
        if delta > 0.0 && delta <= 1.0 {
            Ok(TukeyParam(delta))
        } else {
            Err(Error::param(format!("Tukey exponent must lie in (0, 1], got {delta}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TukeyParam {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        TukeyParam::new(v)
    }
}

impl From<TukeyParam> for f64 {
    fn from(t: TukeyParam) -> f64 {
        t.0
    }
}

/// Weights of the diagonal and off-diagonal shrinkage terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageParams {
    pub diag: f64,
    pub off_diag: f64,
}

impl ShrinkageParams {
    pub fn new(diag: f64, off_diag: f64) -> Result<Self> {
        let s = ShrinkageParams { diag, off_diag };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.diag >= 0.0 && self.off_diag >= 0.0 {
            Ok(())
        } else {
            Err(Error::param("shrinkage weights must be non-negative"))
        }
    }
}

impl Default for ShrinkageParams {
    fn default() -> Self {
        ShrinkageParams { diag: 3.0, off_diag: 3.0 }
    }
}

/// Element-wise `sign(v)·|v|^δ`.
pub fn tukey_transform(features: &Tensor, delta: TukeyParam) -> Tensor {
    features.clone().map(|v| signed_pow(v, delta.get()))
}

/// `S + γ₀·V₀·I + γ₁·V₁·(1 − I)` where `V₀` is the mean diagonal variance
/// and `V₁` the mean off-diagonal covariance of `S`.
pub fn shrink_covariance(s: &Tensor, params: ShrinkageParams) -> Result<Tensor> {
    params.validate()?;
    let d = linalg::square_dim(s)?;
    let data = s.data();
    let v0 = (0..d).map(|i| data[i * d + i]).sum::<f64>() / d as f64;
    let v1 = if d > 1 {
        let total: f64 = data.iter().sum();
        let diag: f64 = (0..d).map(|i| data[i * d + i]).sum();
        (total - diag) / (d * (d - 1)) as f64
    } else {
        0.0
    };
    let mut out = data.to_vec();
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] += if i == j { params.diag * v0 } else { params.off_diag * v1 };
        }
    }
    Tensor::matrix(d, d, out)
}

/// `Ŝ(i,j) = S(i,j) / (σᵢσⱼ)` with `σᵢ = √S(i,i)`.
pub fn normalize_correlation(s: &Tensor) -> Result<Tensor> {
    let d = linalg::square_dim(s)?;
    let data = s.data();
    let sigma: Vec<f64> = (0..d)
        .map(|i| {
            let v = data[i * d + i];
            if v > 0.0 && v.is_finite() {
                Ok(v.sqrt())
            } else {
                Err(Error::Degenerate(format!("variance {v} on diagonal entry {i}")))
            }
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = if i == j { 1.0 } else { data[i * d + j] / (sigma[i] * sigma[j]) };
        }
    }
    Tensor::matrix(d, d, out)
}

/// Stored feature distribution of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototype {
    pub class_id: usize,
    pub mean: Vec<f64>,
    /// Shrunk, correlation-normalised covariance.
    pub covariance: Tensor,
    pub precision: Arc<Tensor>,
    pub sample_count: usize,
}

impl ClassPrototype {
    /// Builds a prototype from Tukey-space features of one class.
    pub fn fit(class_id: usize, features: &Tensor, shrinkage: ShrinkageParams) -> Result<Self> {
        let (mean, raw) = covariance(features).map_err(|e| match e {
            Error::InsufficientData(m) => Error::InsufficientData(format!("class {class_id}: {m}")),
            other => other,
        })?;
        let covariance = normalize_correlation(&shrink_covariance(&raw, shrinkage)?)?;
        ClassPrototype::from_parts(class_id, mean, covariance, features.rows())
    }

    pub fn from_parts(class_id: usize, mean: Vec<f64>, covariance: Tensor, sample_count: usize) -> Result<Self> {
        if linalg::square_dim(&covariance)? != mean.len() {
            return Err(Error::dim("covariance does not match the mean"));
        }
        let precision = Arc::new(spd_inverse(&covariance).map_err(|e| match e {
            Error::Degenerate(m) => Error::Degenerate(format!("class {class_id}: {m}")),
            other => other,
        })?);
        Ok(ClassPrototype { class_id, mean, covariance, precision, sample_count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `√((v − μ)ᵀ Ŝ⁻¹ (v − μ))` for a Tukey-space feature vector.
pub fn mahalanobis(v: &[f64], proto: &ClassPrototype) -> Result<f64> {
    if v.len() != proto.dim() {
        return Err(Error::dim(format!("feature of width {} against prototype of width {}", v.len(), proto.dim())));
    }
    let r: Vec<f64> = v.iter().zip(&proto.mean).map(|(a, b)| a - b).collect();
    Ok(quad_form(proto.precision.data(), &r).max(0.0).sqrt())
}

/// All class prototypes fitted from one model, with the transform settings
/// used to build them.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub prototypes: Vec<ClassPrototype>,
    pub tukey: TukeyParam,
    pub shrinkage: ShrinkageParams,
}

impl PrototypeSet {
    /// Fits one prototype per class from raw backbone features.
    pub fn fit_features(
        features: &Tensor,
        labels: &[usize],
        num_classes: usize,
        tukey: TukeyParam,
        shrinkage: ShrinkageParams,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::dim("one label per feature row required"));
        }
        let transformed = tukey_transform(features, tukey);
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &y) in labels.iter().enumerate() {
            by_class.get_mut(y).ok_or_else(|| Error::param(format!("label {y} outside [0, {num_classes})")))?.push(i);
        }
        let prototypes =
            par::map_range(num_classes, |k| ClassPrototype::fit(k, &transformed.gather_rows(&by_class[k]), shrinkage))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
        Ok(PrototypeSet { prototypes, tukey, shrinkage })
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn get(&self, class_id: usize) -> Option<&ClassPrototype> {
        self.prototypes.iter().find(|p| p.class_id == class_id)
    }

    /// Closest prototype (Mahalanobis) whose class differs from
    /// `true_class`; ties go to the lowest class id.
    pub fn nearest_wrong(&self, v: &[f64], true_class: usize) -> Result<&ClassPrototype> {
        nearest_wrong_distribution(v, true_class, &self.prototypes)
    }

    pub fn to_container(&self) -> Container {
        let meta = json!({
            "tukey": self.tukey.get(),
            "shrinkage": self.shrinkage,
            "classes": self.prototypes.iter().map(|p| json!({
                "class_id": p.class_id,
                "sample_count": p.sample_count,
            })).collect::<Vec<_>>(),
        });
        let mut c = Container::new("prototypes", meta);
        for p in &self.prototypes {
            c.push(format!("class.{}.mean", p.class_id), Tensor::new(vec![p.dim()], p.mean.clone()).expect("sized"));
            c.push(format!("class.{}.covariance", p.class_id), p.covariance.clone());
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let bad = |m: &str| Error::Format { offset: 0, message: m.to_string() };
        if c.kind != "prototypes" {
            return Err(bad("expected a prototype container"));
        }
        let tukey = TukeyParam::new(c.meta["tukey"].as_f64().ok_or_else(|| bad("missing tukey"))?)?;
        let shrinkage: ShrinkageParams = serde_json::from_value(c.meta["shrinkage"].clone())?;
        let classes = c.meta["classes"].as_array().ok_or_else(|| bad("missing class list"))?;
        let mut prototypes = Vec::with_capacity(classes.len());
        for entry in classes {
            let id = entry["class_id"].as_u64().ok_or_else(|| bad("class id"))? as usize;
            let count = entry["sample_count"].as_u64().ok_or_else(|| bad("sample count"))? as usize;
            let mean = c.get(&format!("class.{id}.mean")).ok_or_else(|| bad("missing mean"))?;
            let cov = c.get(&format!("class.{id}.covariance")).ok_or_else(|| bad("missing covariance"))?;
            prototypes.push(ClassPrototype::from_parts(id, mean.data().to_vec(), cov.clone(), count)?);
        }
        Ok(PrototypeSet { prototypes, tukey, shrinkage })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        PrototypeSet::from_container(&Container::load(path)?)
    }
}

pub fn nearest_wrong_distribution<'a>(
    v: &[f64],
    true_class: usize,
    prototypes: &'a [ClassPrototype],
) -> Result<&'a ClassPrototype> {
    let mut best: Option<(&ClassPrototype, f64)> = None;
    let mut ordered: Vec<&ClassPrototype> = prototypes.iter().collect();
    ordered.sort_by_key(|p| p.class_id);
    for p in ordered {
        if p.class_id == true_class {
            continue;
        }
        let d = mahalanobis(v, p)?;
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((p, d));
        }
    }
    best.map(|(p, _)| p).ok_or_else(|| Error::NoCandidate(format!("no prototype other than class {true_class}")))
}

/// Fits prototypes from `model`'s backbone features on a labelled dataset.
pub fn fit_prototypes(
    model: &Model,
    data: &Dataset,
    tukey: TukeyParam,
    shrinkage: ShrinkageParams,
) -> Result<PrototypeSet> {
    let features = model.feature_matrix(data.inputs())?;
    PrototypeSet::fit_features(&features, data.labels(), data.num_classes(), tukey, shrinkage)
}
