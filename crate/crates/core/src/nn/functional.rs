use super::tape::log_softmax_row;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Row-wise `softmax(logits / temperature)`.
pub fn softmax(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    Ok(log_softmax(logits, temperature)?.map(f64::exp))
}

/// Row-wise `log softmax(logits / temperature)`, stabilised by the row maximum.
pub fn log_softmax(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::param(format!("temperature must be > 0, got {temperature}")));
    }
    let k = logits.cols();
    let mut out = Vec::with_capacity(logits.len());
    for i in 0..logits.rows() {
        out.extend(log_softmax_row(logits.row(i), temperature));
    }
    Tensor::matrix(logits.rows(), k, out)
}

/// Mean negative log-likelihood of the true class.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let k = logits.cols();
    if labels.len() != logits.rows() || labels.is_empty() {
        return Err(Error::param("one label per logit row required"));
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::param(format!("label {y} outside [0, {k})")));
        }
        total -= log_softmax_row(logits.row(i), 1.0)[y];
    }
    Ok(total / labels.len() as f64)
}

impl Tensor {
    pub fn map(mut self, f: impl Fn(f64) -> f64) -> Tensor {
        self.data_mut().iter_mut().for_each(|v| *v = f(*v));
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_uniform_rows() {
        let z = Tensor::matrix(2, 4, vec![3.0; 8]).unwrap();
        for t in [0.5, 1.0, 7.0] {
            let p = softmax(&z, t).unwrap();
            assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn closed_forms() {
        let p = softmax(&Tensor::matrix(1, 2, vec![2f64.ln(), 0.0]).unwrap(), 1.0).unwrap();
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-15);

        let p = softmax(&Tensor::matrix(1, 2, vec![4.0, 0.0]).unwrap(), 2.0).unwrap();
        let e2 = 2f64.exp();
        assert!((p.data()[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((p.data()[0] - 0.8808).abs() < 1e-4);
        assert!((p.data()[1] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn bad_temperature_rejected() {
        let z = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        assert!(softmax(&z, 0.0).is_err());
        assert!(softmax(&z, -1.0).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let z = Tensor::matrix(2, 5, vec![0.3; 10]).unwrap();
        assert!((cross_entropy(&z, &[0, 4]).unwrap() - 5f64.ln()).abs() < 1e-14);
        let z = Tensor::matrix(1, 3, vec![1000.0, 0.0, 0.0]).unwrap();
        assert!(cross_entropy(&z, &[0]).unwrap().abs() < 1e-12);
        assert!(cross_entropy(&z, &[3]).is_err());
    }

    #[test]
    fn large_margins_do_not_overflow() {
        let z = Tensor::matrix(1, 3, vec![1e4, -1e4, 0.0]).unwrap();
        let p = softmax(&z, 1.0).unwrap();
        assert!(p.data().iter().all(|v| v.is_finite()));
        assert_eq!(p.data()[0], 1.0);
    }
}
