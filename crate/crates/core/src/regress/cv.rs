//! Seeded k-fold grid search over KRR and SVR hyperparameters.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::krr::{krr_dual, krr_fit};
use super::svr::{smo, svr_fit, DenseRows, SvrParams};
use super::{pairwise_sq_distances, Kernel, Model};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    Krr,
    #[default]
    Svr,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "krr" => Ok(Algorithm::Krr),
            "svr" => Ok(Algorithm::Svr),
            other => Err(Error::invalid(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Krr => "krr",
            Algorithm::Svr => "svr",
        })
    }
}

/// Candidate hyperparameters and fold setup.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub gammas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub cs: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Solver settings shared by every SVR cell (`c`/`epsilon` are ignored).
    pub svr: SvrParams,
}

fn powers_of_two(from: i32, to: i32, step: usize) -> Vec<f64> {
    (from..=to).step_by(step).map(|e| 2f64.powi(e)).collect()
}

impl Default for HyperGrid {
    /// gamma ∈ {2⁻¹⁵, 2⁻¹³, …, 2⁻⁵}, C ∈ {2⁻¹, …, 2⁷}, lambda ∈ {2⁻¹², …, 2⁰},
    /// epsilon ∈ {0.5, 1, 2} years, 5 folds.
    fn default() -> Self {
        HyperGrid {
            gammas: powers_of_two(-15, -5, 2),
            lambdas: powers_of_two(-12, 0, 2),
            cs: powers_of_two(-1, 7, 1),
            epsilons: vec![0.5, 1.0, 2.0],
            folds: 5,
            seed: 0,
            svr: SvrParams::default(),
        }
    }
}

impl HyperGrid {
    /// All cells for `algo`, gamma-major.
    pub fn cells(&self, algo: Algorithm) -> Vec<Cell> {
        let mut out = Vec::new();
        for &gamma in &self.gammas {
            match algo {
                Algorithm::Krr => out.extend(self.lambdas.iter().map(|&lambda| Cell::Krr { lambda, gamma })),
                Algorithm::Svr => {
                    for &c in &self.cs {
                        out.extend(self.epsilons.iter().map(|&epsilon| Cell::Svr { c, epsilon, gamma }));
                    }
                }
            }
        }
        out
    }
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Krr { lambda: f64, gamma: f64 },
    Svr { c: f64, epsilon: f64, gamma: f64 },
}

impl Cell {
    pub fn gamma(&self) -> f64 {
        match *self {
            Cell::Krr { gamma, .. } | Cell::Svr { gamma, .. } => gamma,
        }
    }

    /// Preference among equal scores: smoother models first (larger lambda,
    /// smaller C, then smaller gamma; larger epsilon for SVR).
    fn smoothness_order(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Krr { lambda: l1, gamma: g1 }, Cell::Krr { lambda: l2, gamma: g2 }) => {
                l2.total_cmp(l1).then(g1.total_cmp(g2))
            }
            (
                Cell::Svr { c: c1, epsilon: e1, gamma: g1 },
                Cell::Svr { c: c2, epsilon: e2, gamma: g2 },
            ) => c1.total_cmp(c2).then(g1.total_cmp(g2)).then(e2.total_cmp(e1)),
            _ => Ordering::Equal,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Krr { lambda, gamma } => write!(f, "krr lambda={lambda} gamma={gamma}"),
            Cell::Svr { c, epsilon, gamma } => write!(f, "svr C={c} epsilon={epsilon} gamma={gamma}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub cell: Cell,
    /// Mean validation MAE over folds; infinite if any fold failed to train.
    pub mean_mae: f64,
    pub fold_maes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best: usize,
    pub scores: Vec<CellScore>,
}

impl CvResult {
    pub fn best_cell(&self) -> Cell {
        self.scores[self.best].cell
    }

    pub fn best_mae(&self) -> f64 {
        self.scores[self.best].mean_mae
    }
}

/// Validation folds of a seeded shuffle: ChaCha8 seeded with `seed`, a
/// Fisher-Yates shuffle of `0..n`, then fold `f` takes positions
/// `f·n/k .. (f+1)·n/k`.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("{k} folds need 2 <= k <= {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k).map(|f| idx[f * n / k..(f + 1) * n / k].to_vec()).collect())
}

fn sub_gram(k: &[f64], n: usize, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &i in rows {
        out.extend(cols.iter().map(|&j| k[i * n + j]));
    }
    out
}

fn mae_of(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
}

/// Fit on `train` and return predictions for `val`, both given as indices
/// into a full Gram matrix.
fn fold_predictions(cell: &Cell, gram: &[f64], n: usize, y: &[f64], train: &[usize], val: &[usize], svr: &SvrParams) -> Result<Vec<f64>> {
    let k_tt = sub_gram(gram, n, train, train);
    let k_vt = sub_gram(gram, n, val, train);
    let y_t: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let nt = train.len();
    let (coef, offset) = match *cell {
        Cell::Krr { lambda, .. } => krr_dual(&k_tt, &y_t, lambda)?,
        Cell::Svr { c, epsilon, .. } => {
            let params = SvrParams { c, epsilon, ..*svr };
            let report = smo(&mut DenseRows { gram: &k_tt, n: nt }, &y_t, &params, false)?;
            (report.beta, report.b)
        }
    };
    Ok(k_vt
        .chunks(nt)
        .map(|row| offset + row.iter().zip(&coef).map(|(k, a)| k * a).sum::<f64>())
        .collect())
}

/// Grid search by k-fold cross-validation. Returns every cell's score and the
/// index of the lowest mean MAE, ties going to the smoother model and then to
/// the earlier cell.
pub fn cross_validate(x: &Matrix, y: &[f64], grid: &HyperGrid, algo: Algorithm) -> Result<CvResult> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let cells = grid.cells(algo);
    if cells.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    for cell in &cells {
        Kernel::rbf(cell.gamma())?;
    }
    let n = x.rows();
    let folds = kfold_indices(n, grid.folds, grid.seed)?;
    let splits: Vec<(Vec<usize>, &Vec<usize>)> = folds
        .iter()
        .map(|val| {
            let mut in_val = vec![false; n];
            val.iter().for_each(|&i| in_val[i] = true);
            ((0..n).filter(|&i| !in_val[i]).collect(), val)
        })
        .collect();

    let dist = pairwise_sq_distances(x);
    let mut gammas: Vec<f64> = cells.iter().map(Cell::gamma).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let grams: Vec<(f64, Vec<f64>)> = gammas
        .par_iter()
        .map(|&g| (g, dist.iter().map(|&d| (-g * d).exp()).collect()))
        .collect();
    let gram_for = |g: f64| &grams.iter().find(|(gg, _)| *gg == g).expect("gamma present").1;

    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..splits.len()).map(move |f| (c, f))).collect();
    let fold_mae: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let cell = &cells[c];
            let (train, val) = &splits[f];
            match fold_predictions(cell, gram_for(cell.gamma()), n, y, train, val, &grid.svr) {
                Ok(pred) => {
                    let truth: Vec<f64> = val.iter().map(|&i| y[i]).collect();
                    mae_of(&pred, &truth)
                }
                Err(e) => {
                    log::warn!("cell {cell} failed on fold {f}: {e}");
                    f64::INFINITY
                }
            }
        })
        .collect();

    let k = splits.len();
    let scores: Vec<CellScore> = cells
        .iter()
        .enumerate()
        .map(|(c, &cell)| {
            let fold_maes = fold_mae[c * k..(c + 1) * k].to_vec();
            let mean_mae = fold_maes.iter().sum::<f64>() / k as f64;
            CellScore {
                cell,
                mean_mae,
                fold_maes,
            }
        })
        .collect();
    let best = (0..scores.len())
        .min_by(|&a, &b| {
            scores[a]
                .mean_mae
                .total_cmp(&scores[b].mean_mae)
                .then(scores[a].cell.smoothness_order(&scores[b].cell))
                .then(a.cmp(&b))
        })
        .expect("nonempty grid");
    if !scores[best].mean_mae.is_finite() {
        return Err(Error::Numerical("every grid cell failed to train".into()));
    }
    Ok(CvResult { best, scores })
}

/// Train the model for one grid cell on all of `x`.
pub fn fit_cell(x: &Matrix, y: &[f64], cell: &Cell, svr: &SvrParams) -> Result<Model> {
    let kernel = Kernel::rbf(cell.gamma())?;
    Ok(match *cell {
        Cell::Krr { lambda, .. } => Model::Krr(krr_fit(x, y, kernel, lambda)?),
        Cell::Svr { c, epsilon, .. } => {
            let params = SvrParams { c, epsilon, ..*svr };
            Model::Svr(svr_fit(x, y, kernel, &params)?)
        }
    })
}
