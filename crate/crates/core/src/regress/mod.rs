//! RBF kernel machinery, kernel ridge regression, epsilon-SVR trained by SMO,
//! and grid-search cross-validation.

mod cv;
mod krr;
mod linalg;
mod svr;

use rayon::prelude::*;

pub use cv::{cross_validate, fit_cell, kfold_indices, Algorithm, Cell, CellScore, CvResult, HyperGrid};
pub use krr::{krr_fit, krr_predict, KrrModel};
pub use linalg::{cholesky_solve, CholeskySolution};
pub use svr::{svr_fit, svr_fit_traced, svr_predict, SmoReport, SvrModel, SvrParams};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Kernel function. Only the Gaussian RBF is provided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(-gamma·‖a-b‖²)`
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!("RBF gamma must be finite and positive, got {gamma}")));
        }
        Ok(Kernel::Rbf { gamma })
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => gamma,
        }
    }

    #[inline]
    pub fn from_sq_dist(&self, d2: f64) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => (-gamma * d2).exp(),
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.from_sq_dist(squared_distance(a, b))
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(Kernel::rbf(gamma)?.eval(a, b))
}

/// Pairwise squared distances between the rows of `x`, `n x n` row-major.
/// Exactly symmetric with a zero diagonal.
pub fn pairwise_sq_distances(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| squared_distance(x.row(i), x.row(j))).collect())
        .collect();
    let mut d = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Squared distances from each row of `a` to each row of `b`, `a.rows() x b.rows()`.
pub fn cross_sq_distances(a: &Matrix, b: &Matrix) -> Vec<f64> {
    (0..a.rows())
        .into_par_iter()
        .flat_map_iter(|i| (0..b.rows()).map(move |j| squared_distance(a.row(i), b.row(j))))
        .collect()
}

/// Kernel Gram matrix of the rows of `x`.
pub fn gram_matrix(x: &Matrix, kernel: &Kernel) -> Vec<f64> {
    pairwise_sq_distances(x).into_iter().map(|d| kernel.from_sq_dist(d)).collect()
}

fn check_dims(expected: usize, x: &Matrix) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.cols(),
        });
    }
    Ok(())
}

/// A trained regressor of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Krr(KrrModel),
    Svr(SvrModel),
}

impl Model {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Model::Krr(_) => Algorithm::Krr,
            Model::Svr(_) => Algorithm::Svr,
        }
    }

    pub fn kernel(&self) -> Kernel {
        match self {
            Model::Krr(m) => m.kernel,
            Model::Svr(m) => m.kernel,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Model::Krr(m) => m.predict(x),
            Model::Svr(m) => m.predict(x),
        }
    }

    /// The grid cell this model's hyperparameters correspond to.
    pub fn cell(&self) -> Cell {
        match self {
            Model::Krr(m) => Cell::Krr {
                lambda: m.lambda,
                gamma: m.kernel.gamma(),
            },
            Model::Svr(m) => Cell::Svr {
                c: m.c,
                epsilon: m.epsilon,
                gamma: m.kernel.gamma(),
            },
        }
    }
}
