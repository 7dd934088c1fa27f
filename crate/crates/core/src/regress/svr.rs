//! Epsilon-SVR dual solved by SMO with maximal-violating-pair selection.
//!
//! The dual is written over `2n` variables `a = (α, α*)` with signs
//! `s_t = +1` for `t < n`, `-1` otherwise:
//!
//! ```text
//! min ½ aᵀQa + pᵀa   s.t.  sᵀa = 0,  0 ≤ a_t ≤ C
//! Q_tu = s_t s_u K(t mod n, u mod n),  p_t = ε - s_t y_(t mod n)
//! ```
//!
//! and the regressor is `f(x) = Σ_i (α_i - α*_i) K(x_i, x) + b`.

use std::rc::Rc;

use rayon::prelude::*;

use super::{check_dims, Kernel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Dual curvature floor for pairs whose kernel rows coincide.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    /// Stop when the maximal KKT violation `m(a) - M(a)` drops to this value.
    pub tol: f64,
    /// Cap on pair updates.
    pub max_iter: usize,
    /// Memory budget for cached kernel rows, in MiB.
    pub cache_mb: usize,
}

impl SvrParams {
    pub fn new(c: f64, epsilon: f64) -> Self {
        SvrParams {
            c,
            epsilon,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 0.1,
            tol: 1e-3,
            max_iter: 10_000_000,
            cache_mb: 200,
        }
    }
}

/// Trained epsilon-SVR. Only samples with nonzero `beta` are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub kernel: Kernel,
    pub c: f64,
    pub epsilon: f64,
    pub support_vectors: Matrix,
    /// Signed dual coefficients `α_i - α*_i` of the support vectors.
    pub beta: Vec<f64>,
    pub b: f64,
}

impl SvrModel {
    pub fn from_parts(kernel: Kernel, c: f64, epsilon: f64, support_vectors: Matrix, beta: Vec<f64>, b: f64) -> Result<Self> {
        if beta.len() != support_vectors.rows() {
            return Err(Error::DimensionMismatch {
                expected: support_vectors.rows(),
                found: beta.len(),
            });
        }
        if beta.iter().any(|v| !(v.abs() <= c * (1.0 + 1e-12))) {
            return Err(Error::invalid("dual coefficient exceeds the box constraint"));
        }
        Ok(SvrModel {
            kernel,
            c,
            epsilon,
            support_vectors,
            beta,
            b,
        })
    }

    pub fn n_support(&self) -> usize {
        self.beta.len()
    }

    pub fn predict_one(&self, q: &[f64]) -> f64 {
        self.support_vectors
            .iter_rows()
            .zip(&self.beta)
            .map(|(sv, b)| b * self.kernel.eval(sv, q))
            .sum::<f64>()
            + self.b
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if self.support_vectors.rows() > 0 {
            check_dims(self.support_vectors.cols(), x)?;
        }
        Ok(x.iter_rows().map(|q| self.predict_one(q)).collect())
    }
}

pub fn svr_predict(model: &SvrModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoReport {
    pub iterations: usize,
    /// Final `m(a) - M(a)`.
    pub kkt_gap: f64,
    /// `α - α*` for every training sample.
    pub beta: Vec<f64>,
    pub b: f64,
    /// Primal-form dual objective `½ aᵀQa + pᵀa` after each pair update (when traced).
    pub objective: Vec<f64>,
}

/// Source of kernel rows over the training samples.
pub(crate) trait KernelRows {
    fn n(&self) -> usize;
    fn diag(&self, i: usize) -> f64;
    fn row(&mut self, i: usize) -> Rc<[f64]>;
}

/// Rows of a precomputed dense Gram matrix.
pub(crate) struct DenseRows<'a> {
    pub gram: &'a [f64],
    pub n: usize,
}

impl KernelRows for DenseRows<'_> {
    fn n(&self) -> usize {
        self.n
    }

    fn diag(&self, i: usize) -> f64 {
        self.gram[i * self.n + i]
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        Rc::from(&self.gram[i * self.n..(i + 1) * self.n])
    }
}

/// Kernel rows computed on demand and kept in an LRU cache.
struct CachedRows<'a> {
    x: &'a Matrix,
    kernel: Kernel,
    rows: Vec<Option<Rc<[f64]>>>,
    last_used: Vec<u64>,
    clock: u64,
    cached: usize,
    capacity: usize,
}

impl<'a> CachedRows<'a> {
    fn new(x: &'a Matrix, kernel: Kernel, cache_mb: usize) -> Self {
        let n = x.rows();
        let per_row = (n * std::mem::size_of::<f64>()).max(1);
        let capacity = ((cache_mb << 20) / per_row).clamp(2, n.max(2));
        CachedRows {
            x,
            kernel,
            rows: vec![None; n],
            last_used: vec![0; n],
            clock: 0,
            cached: 0,
            capacity,
        }
    }
}

impl KernelRows for CachedRows<'_> {
    fn n(&self) -> usize {
        self.x.rows()
    }

    fn diag(&self, i: usize) -> f64 {
        self.kernel.eval(self.x.row(i), self.x.row(i))
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        self.clock += 1;
        self.last_used[i] = self.clock;
        if let Some(r) = &self.rows[i] {
            return r.clone();
        }
        if self.cached >= self.capacity {
            let victim = (0..self.rows.len())
                .filter(|&k| self.rows[k].is_some())
                .min_by_key(|&k| self.last_used[k])
                .expect("cache is nonempty");
            self.rows[victim] = None;
            self.cached -= 1;
        }
        let (x, kernel) = (self.x, self.kernel);
        let xi = x.row(i);
        let row: Vec<f64> = (0..x.rows())
            .into_par_iter()
            .map(|j| kernel.eval(xi, x.row(j)))
            .collect();
        let row: Rc<[f64]> = Rc::from(row);
        self.rows[i] = Some(row.clone());
        self.cached += 1;
        row
    }
}

pub fn svr_fit(x: &Matrix, y: &[f64], kernel: Kernel, params: &SvrParams) -> Result<SvrModel> {
    svr_fit_traced(x, y, kernel, params, false).map(|(m, _)| m)
}

/// As [`svr_fit`], also returning solver diagnostics. With `trace` the dual
/// objective is recorded after every update.
pub fn svr_fit_traced(x: &Matrix, y: &[f64], kernel: Kernel, params: &SvrParams, trace: bool) -> Result<(SvrModel, SmoReport)> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let mut rows = CachedRows::new(x, kernel, params.cache_mb);
    let report = smo(&mut rows, y, params, trace)?;
    let model = build_model(x, kernel, params, &report);
    Ok((model, report))
}

pub(crate) fn build_model(x: &Matrix, kernel: Kernel, params: &SvrParams, report: &SmoReport) -> SvrModel {
    let idx: Vec<usize> = (0..report.beta.len()).filter(|&i| report.beta[i] != 0.0).collect();
    SvrModel {
        kernel,
        c: params.c,
        epsilon: params.epsilon,
        support_vectors: x.select_rows(&idx),
        beta: idx.iter().map(|&i| report.beta[i]).collect(),
        b: report.b,
    }
}

pub(crate) fn smo(k: &mut impl KernelRows, y: &[f64], params: &SvrParams, trace: bool) -> Result<SmoReport> {
    params.validate()?;
    let n = k.n();
    if n < 2 {
        return Err(Error::invalid("SVR needs at least two samples"));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    let c = params.c;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..2 * n).map(|t| params.epsilon - sign(t) * y[t % n]).collect();
    let mut a = vec![0.0; 2 * n];
    let mut grad = p.clone();
    let diag: Vec<f64> = (0..n).map(|i| k.diag(i)).collect();
    let mut objective = Vec::new();

    let in_up = |a: &[f64], t: usize| if t < n { a[t] < c } else { a[t] > 0.0 };
    let in_low = |a: &[f64], t: usize| if t < n { a[t] > 0.0 } else { a[t] < c };

    let mut iterations = 0;
    let gap = loop {
        // i maximises -s_t ∇f_t over I_up, j minimises it over I_low.
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..2 * n {
            let v = -sign(t) * grad[t];
            if in_up(&a, t) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(&a, t) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        let gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap <= params.tol {
            break gap.max(0.0);
        }
        if iterations >= params.max_iter {
            return Err(Error::NotConverged {
                algorithm: "SMO",
                iterations,
            });
        }
        iterations += 1;

        let (ii, jj) = (i % n, j % n);
        let row_i = k.row(ii);
        let curvature = (diag[ii] + diag[jj] - 2.0 * row_i[jj]).max(TAU);
        // Step along a_i += s_i t, a_j -= s_j t.
        let mut step = gap / curvature;
        step = step.min(if i < n { c - a[i] } else { a[i] });
        step = step.min(if j < n { a[j] } else { c - a[j] });

        a[i] += sign(i) * step;
        a[j] -= sign(j) * step;
        // Snap to the bounds so bound membership stays exact.
        for t in [i, j] {
            if a[t] < 1e-12 * c {
                a[t] = 0.0;
            } else if a[t] > c * (1.0 - 1e-12) {
                a[t] = c;
            }
        }
        // ∇f_t += s_t · step · (K(t, i) - K(t, j))
        for s in 0..n {
            let d = step * row_i[s];
            grad[s] += d;
            grad[s + n] -= d;
        }
        drop(row_i);
        let row_j = k.row(jj);
        for s in 0..n {
            let d = step * row_j[s];
            grad[s] -= d;
            grad[s + n] += d;
        }
        if trace {
            objective.push(dual_objective(&a, &grad, &p));
        }
    };

    // Bias from free variables, else the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..2 * n {
        let yg = sign(t) * grad[t];
        let at_upper = a[t] >= c;
        let at_lower = a[t] <= 0.0;
        if at_upper {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    let beta: Vec<f64> = (0..n).map(|i| a[i] - a[i + n]).collect();
    Ok(SmoReport {
        iterations,
        kkt_gap: gap,
        beta,
        b: -rho,
        objective,
    })
}

/// `½ aᵀQa + pᵀa`, using `∇f = Qa + p`.
fn dual_objective(a: &[f64], grad: &[f64], p: &[f64]) -> f64 {
    0.5 * a.iter().zip(grad).zip(p).map(|((a, g), p)| a * (g + p)).sum::<f64>()
}
