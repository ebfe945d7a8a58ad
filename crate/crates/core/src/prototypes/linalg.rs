use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Tensor) -> Result<Tensor> {
    let n = square_dim(a)?;
    let s = a.data();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = s[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Degenerate(format!("matrix is not positive definite (pivot {j} = {d:e})")));
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut v = s[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / d;
        }
    }
    Tensor::matrix(n, n, l)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor. The result is symmetrised.
pub fn spd_inverse(a: &Tensor) -> Result<Tensor> {
    let n = square_dim(a)?;
    let l = cholesky(a)?;
    let l = l.data();
    // L⁻¹ by forward substitution, column by column
    let mut linv = vec![0.0; n * n];
    for c in 0..n {
        for i in c..n {
            let mut v = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                v -= l[i * n + k] * linv[k * n + c];
            }
            linv[i * n + c] = v / l[i * n + i];
        }
    }
    // A⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut v = 0.0;
            for k in i..n {
                v += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = v;
            inv[j * n + i] = v;
        }
    }
    Tensor::matrix(n, n, inv)
}

pub(crate) fn square_dim(a: &Tensor) -> Result<usize> {
    match a.shape() {
        [r, c] if r == c => Ok(*r),
        s => Err(Error::dim(format!("expected a square matrix, got {s:?}"))),
    }
}

/// Unbiased sample covariance of the rows of `x` (`N × d`), with the mean.
pub fn covariance(x: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::InsufficientData(format!("covariance needs at least 2 samples, got {n}")));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for i in 0..n {
        centered.iter_mut().zip(x.row(i).iter().zip(&mean)).for_each(|(c, (v, m))| *c = v - m);
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            let row = &mut cov[a * d..(a + 1) * d];
            for b in a..d {
                row[b] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / denom;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    Ok((mean, Tensor::matrix(d, d, cov)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_2x2() {
        let a = Tensor::matrix(2, 2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let inv = spd_inverse(&a).unwrap();
        // det 8 → [[3, −2], [−2, 4]] / 8
        let expect = [0.375, -0.25, -0.25, 0.5];
        for (g, e) in inv.data().iter().zip(expect) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn indefinite_matrix_is_degenerate() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::Degenerate(_))));
    }

    #[test]
    fn covariance_matches_hand_computation() {
        let x = Tensor::matrix(3, 2, vec![1.0, 2.0, 2.0, 4.0, 3.0, 9.0]).unwrap();
        let (mean, cov) = covariance(&x).unwrap();
        assert_eq!(mean, vec![2.0, 5.0]);
        // deviations (−1,−3), (0,−1), (1,4)
        assert_eq!(cov.data(), &[1.0, 3.5, 3.5, 13.0]);
        assert!(covariance(&Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap()).is_err());
    }
}
