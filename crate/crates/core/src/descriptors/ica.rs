//! Learning BSIF filters: PCA whitening followed by symmetric FastICA.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::FilterBank;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Mean-subtracted square image patches, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    l: usize,
    patches: Vec<Vec<f64>>,
}

impl PatchSet {
    /// Wrap raw `l x l` patches, removing each patch's own mean.
    pub fn new(l: usize, mut patches: Vec<Vec<f64>>) -> Result<Self> {
        if l == 0 || patches.is_empty() {
            return Err(Error::invalid("patch set needs l >= 1 and at least one patch"));
        }
        for p in &mut patches {
            if p.len() != l * l {
                return Err(Error::DimensionMismatch {
                    expected: l * l,
                    found: p.len(),
                });
            }
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            p.iter_mut().for_each(|v| *v -= mean);
        }
        Ok(PatchSet { l, patches })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patches(&self) -> &[Vec<f64>] {
        &self.patches
    }

    /// Patches as the columns of an `l² x m` matrix.
    fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.l * self.l;
        DMatrix::from_fn(d, self.len(), |r, c| self.patches[c][r])
    }
}

/// Draw `m` patches at uniformly random positions: an image is picked
/// uniformly, then a top-left corner uniformly within it.
pub fn sample_patches(images: &[GrayImage], l: usize, m: usize, seed: u64) -> Result<PatchSet> {
    if images.is_empty() || m == 0 || l == 0 {
        return Err(Error::invalid("need at least one image, m >= 1 and l >= 1"));
    }
    if let Some(img) = images.iter().find(|i| i.width() < l || i.height() < l) {
        return Err(Error::invalid(format!(
            "image {}x{} is smaller than the {l}x{l} patch",
            img.width(),
            img.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = Vec::with_capacity(m);
    for _ in 0..m {
        let img = &images[rng.random_range(0..images.len())];
        let x0 = rng.random_range(0..=img.width() - l);
        let y0 = rng.random_range(0..=img.height() - l);
        let mut p = Vec::with_capacity(l * l);
        for y in y0..y0 + l {
            for x in x0..x0 + l {
                p.push(img.get(x, y) as f64);
            }
        }
        patches.push(p);
    }
    PatchSet::new(l, patches)
}

/// Stopping rule and iteration cap for the ICA fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    /// Mean absolute elementwise change of the unmixing matrix (after sign alignment).
    pub tol: f64,
    pub max_iter: usize,
    /// Eigenvalues below `rank_threshold * largest` count as zero.
    pub rank_threshold: f64,
    /// Largest tolerated off-diagonal correlation of training responses.
    pub max_correlation: f64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        IcaOptions {
            tol: 1e-6,
            max_iter: 1000,
            rank_threshold: 1e-10,
            max_correlation: 0.05,
        }
    }
}

/// [`learn_filterbank_with`] using [`IcaOptions::default`].
pub fn learn_filterbank(patches: &PatchSet, n: usize, seed: u64) -> Result<FilterBank> {
    learn_filterbank_with(patches, n, seed, &IcaOptions::default())
}

/// Learn `n` filters whose responses on `patches` are maximally independent.
///
/// Steps: patch covariance, PCA keeping the `n` leading components,
/// whitening, then symmetric FastICA with a `tanh` contrast from a seeded
/// orthogonal start. Filters are the rows of `unmixing · whitening`,
/// reshaped to `l x l`.
pub fn learn_filterbank_with(patches: &PatchSet, n: usize, seed: u64, opts: &IcaOptions) -> Result<FilterBank> {
    let l = patches.l();
    let d = l * l;
    let m = patches.len();
    if n == 0 || n > d {
        return Err(Error::invalid(format!("filter count {n} must be in 1..={d}")));
    }
    if m < 20 * d {
        return Err(Error::invalid(format!(
            "{m} patches are too few for {l}x{l} filters (need at least {})",
            20 * d
        )));
    }

    let mut x = patches.to_matrix();
    for mut row in x.row_iter_mut() {
        let mean = row.sum() / m as f64;
        row.add_scalar_mut(-mean);
    }
    let cov = (&x * x.transpose()) / m as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let largest = eig.eigenvalues[order[0]];
    let significant = order
        .iter()
        .take_while(|&&i| largest > 0.0 && eig.eigenvalues[i] > opts.rank_threshold * largest)
        .count();
    if significant < n {
        return Err(Error::RankDeficient {
            wanted: n,
            found: significant,
        });
    }

    let whitening = DMatrix::from_fn(n, d, |k, j| {
        let i = order[k];
        eig.eigenvectors[(j, i)] / eig.eigenvalues[i].sqrt()
    });
    let z = &whitening * &x;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut w = symmetric_decorrelation(&init)?;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let y = &w * &z;
        let g = y.map(f64::tanh);
        let g_prime_mean: Vec<f64> = g
            .row_iter()
            .map(|row| row.iter().map(|v| 1.0 - v * v).sum::<f64>() / m as f64)
            .collect();
        let mut next = (&g * z.transpose()) / m as f64;
        for i in 0..n {
            for j in 0..n {
                next[(i, j)] -= g_prime_mean[i] * w[(i, j)];
            }
        }
        let mut next = symmetric_decorrelation(&next)?;
        // Rows are only defined up to sign; align them with the previous iterate.
        for i in 0..n {
            if next.row(i).dot(&w.row(i)) < 0.0 {
                next.row_mut(i).neg_mut();
            }
        }
        let change = (&next - &w).abs().sum() / (n * n) as f64;
        w = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            algorithm: "FastICA",
            iterations: opts.max_iter,
        });
    }

    let filters_m = &w * &whitening;
    let filters: Vec<Vec<f64>> = filters_m
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let provenance = format!("ica l={l} n={n} m={m} seed={seed}");
    let bank = FilterBank::new(l, filters, provenance)?;
    let corr = max_offdiag_correlation(&bank, patches);
    if !(corr <= opts.max_correlation) {
        return Err(Error::Numerical(format!(
            "learned filter responses are correlated ({corr:.4} > {})",
            opts.max_correlation
        )));
    }
    Ok(bank)
}

/// `(A Aᵀ)^{-1/2} A`, the nearest matrix with orthonormal rows.
fn symmetric_decorrelation(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a * a.transpose());
    if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Numerical("singular matrix in symmetric decorrelation".into()));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * a)
}

/// Largest absolute off-diagonal entry of the correlation matrix of filter
/// responses over `patches`.
pub fn max_offdiag_correlation(bank: &FilterBank, patches: &PatchSet) -> f64 {
    let n = bank.n();
    let m = patches.len() as f64;
    let responses: Vec<Vec<f64>> = bank
        .filters()
        .iter()
        .map(|f| {
            patches
                .patches()
                .iter()
                .map(|p| p.iter().zip(f).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let means: Vec<f64> = responses.iter().map(|r| r.iter().sum::<f64>() / m).collect();
    let cov = |i: usize, j: usize| -> f64 {
        responses[i]
            .iter()
            .zip(&responses[j])
            .map(|(a, b)| (a - means[i]) * (b - means[j]))
            .sum::<f64>()
            / m
    };
    let var: Vec<f64> = (0..n).map(|i| cov(i, i)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((cov(i, j) / (var[i] * var[j]).sqrt()).abs());
        }
    }
    worst
}
