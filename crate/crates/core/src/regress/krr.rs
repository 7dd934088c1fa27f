use super::linalg::cholesky_solve;
use super::{check_dims, gram_matrix, Kernel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Kernel ridge regression in dual form, with targets centred on their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    pub kernel: Kernel,
    pub lambda: f64,
    pub train_x: Matrix,
    pub alpha: Vec<f64>,
    pub y_mean: f64,
}

/// Solve `(K + λI) α = y - mean(y)` on a precomputed Gram matrix.
pub(crate) fn krr_dual(gram: &[f64], y: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    let n = y.len();
    if n == 0 {
        return Err(Error::invalid("KRR needs at least one sample"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut a = gram.to_vec();
    for i in 0..n {
        a[i * n + i] += lambda;
    }
    let sol = cholesky_solve(&a, n, &centred)?;
    if sol.relative_residual > 1e-8 {
        log::warn!(
            "KRR solve residual {:.2e} exceeds 1e-8 (lambda {lambda}, jitter {:.0e})",
            sol.relative_residual,
            sol.jitter
        );
    }
    Ok((sol.x, y_mean))
}

pub fn krr_fit(x: &Matrix, y: &[f64], kernel: Kernel, lambda: f64) -> Result<KrrModel> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let gram = gram_matrix(x, &kernel);
    let (alpha, y_mean) = krr_dual(&gram, y, lambda)?;
    Ok(KrrModel {
        kernel,
        lambda,
        train_x: x.clone(),
        alpha,
        y_mean,
    })
}

pub fn krr_predict(model: &KrrModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict(x)
}

impl KrrModel {
    pub fn from_parts(kernel: Kernel, lambda: f64, train_x: Matrix, alpha: Vec<f64>, y_mean: f64) -> Result<Self> {
        if alpha.len() != train_x.rows() {
            return Err(Error::DimensionMismatch {
                expected: train_x.rows(),
                found: alpha.len(),
            });
        }
        Ok(KrrModel {
            kernel,
            lambda,
            train_x,
            alpha,
            y_mean,
        })
    }

    pub fn predict_one(&self, q: &[f64]) -> f64 {
        self.y_mean
            + self
                .train_x
                .iter_rows()
                .zip(&self.alpha)
                .map(|(xi, a)| a * self.kernel.eval(xi, q))
                .sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_dims(self.train_x.cols(), x)?;
        Ok(x.iter_rows().map(|q| self.predict_one(q)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_shrinks_toward_mean() {
        // One sample: y_c = 0, so the prediction is y itself; check the general
        // scalar formula on a two-point problem whose points are far apart instead.
        let x = Matrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let m = krr_fit(&x, &[30.0], Kernel::rbf(1.0).unwrap(), 0.5).unwrap();
        assert_eq!(m.y_mean, 30.0);
        assert_eq!(m.alpha, vec![0.0]);
        assert_eq!(m.predict_one(&[1.0, 2.0]), 30.0);

        // Two points with k(x1,x2) ~ 0: each behaves as a scalar problem,
        // f(x_i) = y_mean + (y_i - y_mean)/(1+λ).
        let x = Matrix::new(2, 1, vec![0.0, 100.0]).unwrap();
        let lambda = 0.25;
        let m = krr_fit(&x, &[10.0, 20.0], Kernel::rbf(1.0).unwrap(), lambda).unwrap();
        let p = m.predict(&x).unwrap();
        assert!((p[0] - (15.0 - 5.0 / (1.0 + lambda))).abs() < 1e-12);
        assert!((p[1] - (15.0 + 5.0 / (1.0 + lambda))).abs() < 1e-12);
    }

    #[test]
    fn far_query_returns_mean() {
        let x = Matrix::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let m = krr_fit(&x, &[1.0, 5.0, 3.0], Kernel::rbf(2.0).unwrap(), 0.1).unwrap();
        assert!((m.predict_one(&[1e3]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let x = Matrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        let k = Kernel::rbf(1.0).unwrap();
        assert!(krr_fit(&x, &[1.0], k, 0.1).is_err());
        assert!(krr_fit(&x, &[1.0, 2.0], k, 0.0).is_err());
        let m = krr_fit(&x, &[1.0, 2.0], k, 0.1).unwrap();
        assert!(m.predict(&Matrix::new(1, 2, vec![0.0, 0.0]).unwrap()).is_err());
    }
}
