//! Independent reference implementations used by the integration and
//! acceptance tests. Each one is written from the defining formula, not from
//! the library code.
#![allow(dead_code)]

use faceage::descriptors::FilterBank;
use faceage::image::GrayImage;
use nalgebra::{DMatrix, DVector};

/// LBP with P = 8, R = 1 straight from the sum of thresholded differences:
/// neighbour `p` sits at angle `2πp/8` (counter-clockwise on screen, y down),
/// rounded to the integer ring.
pub fn lbp_literal(img: &GrayImage) -> Vec<u16> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gc = img.get(x, y) as i32;
            let mut code = 0u16;
            for p in 0..8 {
                let a = std::f64::consts::TAU * p as f64 / 8.0;
                let nx = (x as f64 + a.cos()).round() as usize;
                let ny = (y as f64 - a.sin()).round() as usize;
                let gp = img.get(nx, ny) as i32;
                if gp - gc >= 0 {
                    code += 1 << p;
                }
            }
            out.push(code);
        }
    }
    out
}

/// BSIF codes by explicit wrap padding followed by a dense correlation.
pub fn bsif_dense(img: &GrayImage, bank: &FilterBank) -> Vec<u16> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let l = bank.l() as i64;
    let r = l / 2;
    let pw = w + 2 * r;
    let padded: Vec<f64> = (0..(h + 2 * r) * pw)
        .map(|k| {
            let (py, px) = (k / pw, k % pw);
            img.get((px - r).rem_euclid(w) as usize, (py - r).rem_euclid(h) as usize) as f64
        })
        .collect();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut code = 0u16;
            for (i, f) in bank.filters().iter().enumerate() {
                let mut s = 0.0;
                for v in 0..l {
                    for u in 0..l {
                        s += f[(v * l + u) as usize] * padded[((y + v) * pw + x + u) as usize];
                    }
                }
                if s > 0.0 {
                    code |= 1 << i;
                }
            }
            out.push(code);
        }
    }
    out
}

/// Dense LU solve of `A x = b`.
pub fn dense_solve(a: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, a);
    m.lu()
        .solve(&DVector::from_column_slice(b))
        .expect("oracle system is nonsingular")
        .iter()
        .copied()
        .collect()
}

pub fn rbf_gram(x: &[f64], gamma: f64) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = (-gamma * (x[i] - x[j]).powi(2)).exp();
        }
    }
    k
}

/// Euclidean projection onto `{z ∈ [0, C]^m : Σ s_t z_t = 0}` for signs
/// `s_t = ±1`, by bisection on the multiplier of the equality.
fn project(v: &[f64], s: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(s).map(|(vi, si)| (vi - mu * si).clamp(0.0, c)).collect() };
    let g = |mu: f64| -> f64 { at(mu).iter().zip(s).map(|(z, si)| z * si).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Epsilon-SVR dual in the `(α, α*)` form, minimised by accelerated projected
/// gradient. Returns `β = α − α*` and the bias.
///
/// Bias: the mean of `y_i − (Kβ)_i − ε·sign(β_i)` over coefficients strictly
/// inside the box, otherwise the midpoint of the interval allowed by the
/// samples at the bounds.
pub fn svr_qp(k: &[f64], y: &[f64], c: f64, eps: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let m = 2 * n;
    let s: Vec<f64> = (0..m).map(|t| if t < n { 1.0 } else { -1.0 }).collect();
    // Lipschitz constant of the gradient: 2·λmax(K).
    let lmax = nalgebra::SymmetricEigen::new(DMatrix::from_row_slice(n, n, k)).eigenvalues.max();
    let step = 1.0 / (2.0 * lmax);
    let grad = |z: &[f64]| -> Vec<f64> {
        let beta: Vec<f64> = (0..n).map(|i| z[i] - z[i + n]).collect();
        let kb: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i * n + j] * beta[j]).sum()).collect();
        (0..m).map(|t| s[t] * kb[t % n] + eps - s[t] * y[t % n]).collect()
    };
    let mut z = vec![0.0; m];
    let mut yk = z.clone();
    let mut tk = 1.0f64;
    for _ in 0..iters {
        let g = grad(&yk);
        let v: Vec<f64> = yk.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let next = project(&v, &s, c);
        let t_next = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        yk = next.iter().zip(&z).map(|(a, b)| a + (tk - 1.0) / t_next * (a - b)).collect();
        z = next;
        tk = t_next;
    }
    let beta: Vec<f64> = (0..n).map(|i| z[i] - z[i + n]).collect();
    (beta.clone(), svr_bias(k, y, &beta, c, eps))
}

/// Residual of sample `i` before adding the bias: `y_i − (Kβ)_i`.
fn raw_residual(k: &[f64], y: &[f64], beta: &[f64], i: usize) -> f64 {
    let n = y.len();
    y[i] - (0..n).map(|j| k[i * n + j] * beta[j]).sum::<f64>()
}

pub fn svr_bias(k: &[f64], y: &[f64], beta: &[f64], c: f64, eps: f64) -> f64 {
    let n = y.len();
    let free_tol = 1e-6 * c;
    let (mut sum, mut count) = (0.0, 0);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let r = raw_residual(k, y, beta, i);
        let b = beta[i];
        if b.abs() > free_tol && b.abs() < c - free_tol {
            sum += r - eps * b.signum();
            count += 1;
        } else if b.abs() <= free_tol {
            // |r - bias| <= eps
            lo = lo.max(r - eps);
            hi = hi.min(r + eps);
        } else if b > 0.0 {
            // r - bias >= eps
            hi = hi.min(r - eps);
        } else {
            lo = lo.max(r + eps);
        }
    }
    if count > 0 {
        sum / count as f64
    } else {
        0.5 * (lo + hi)
    }
}

/// Largest per-sample violation of the epsilon-SVR optimality conditions for
/// coefficients `beta` and bias `b`.
pub fn svr_kkt_violation(k: &[f64], y: &[f64], beta: &[f64], b: f64, c: f64, eps: f64) -> f64 {
    let n = y.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let r = raw_residual(k, y, beta, i) - b;
        let bi = beta[i];
        let v = if bi == 0.0 {
            (r.abs() - eps).max(0.0)
        } else if bi >= c {
            (eps - r).max(0.0)
        } else if bi <= -c {
            (r + eps).max(0.0)
        } else if bi > 0.0 {
            (r - eps).abs()
        } else {
            (r + eps).abs()
        };
        worst = worst.max(v);
    }
    worst
}
