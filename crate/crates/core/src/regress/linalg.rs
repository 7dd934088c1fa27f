use crate::error::{Error, Result};

/// Solution of a symmetric positive-definite system.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskySolution {
    pub x: Vec<f64>,
    /// Diagonal jitter that was needed for the factorization to succeed.
    pub jitter: f64,
    /// Relative residual `‖A x - b‖ / ‖b‖` against the unjittered matrix.
    pub relative_residual: f64,
}

/// In-place lower Cholesky factor of a row-major `n x n` matrix.
/// Returns false if a pivot is not positive.
fn factor(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

fn substitute(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

fn residual(a: &[f64], n: usize, x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| b[i] - a[i * n..(i + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum::<f64>())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve `A x = b` for symmetric positive (semi)definite `A` (row-major).
///
/// Tries a plain factorization first, then adds diagonal jitter starting at
/// 1e-10 and growing tenfold up to 1e-4. A few steps of iterative refinement
/// against the original `A` bring the residual toward `1e-8·‖b‖`.
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Result<CholeskySolution> {
    if a.len() != n * n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: a.len(),
        });
    }
    let jitters = std::iter::once(0.0).chain((0..=6).map(|e| 1e-10 * 10f64.powi(e)));
    for jitter in jitters {
        let mut l = a.to_vec();
        for i in 0..n {
            l[i * n + i] += jitter;
        }
        if !factor(&mut l, n) {
            continue;
        }
        let mut x = substitute(&l, n, b);
        let bnorm = norm(b);
        let mut r = residual(a, n, &x, b);
        for _ in 0..5 {
            if norm(&r) <= 1e-8 * bnorm {
                break;
            }
            let dx = substitute(&l, n, &r);
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
            r = residual(a, n, &x, b);
        }
        let relative_residual = if bnorm > 0.0 { norm(&r) / bnorm } else { norm(&r) };
        if x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        return Ok(CholeskySolution {
            x,
            jitter,
            relative_residual,
        });
    }
    Err(Error::Numerical(
        "Cholesky factorization failed even with 1e-4 diagonal jitter".into(),
    ))
}
