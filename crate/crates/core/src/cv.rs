//! K-fold selection of the penalty level.
//!
//! Each fold is fit along the grid from the largest to the smallest `rho`,
//! warm-starting the solver from the previous level, and scored by the
//! held-out mean squared difference between canonical variates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::AdmmState;
use crate::cca::{CcaFitter, CcaModel, FitOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{select_rows, Mat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    /// Explicit grid. When absent, `grid_size` log-spaced points on
    /// `[grid_min_ratio, 1] * rho_max` are used.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    pub grid_size: usize,
    pub grid_min_ratio: f64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            grid: None,
            grid_size: 10,
            grid_min_ratio: 1e-3,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: Vec<f64>,
    /// `folds x grid` held-out scores; `inf` marks a failed fit.
    pub fold_scores: Vec<Vec<f64>>,
    pub mean_scores: Vec<f64>,
    pub selected_index: usize,
    pub selected_rho: f64,
    pub refit: CcaModel,
}

/// `size` log-spaced values from `min_ratio * rho_max` to `rho_max`, ascending.
pub fn default_grid(rho_max: f64, size: usize, min_ratio: f64) -> Vec<f64> {
    if size == 0 {
        return Vec::new();
    }
    if size == 1 || rho_max <= 0.0 {
        return vec![rho_max.max(0.0); size.min(1)];
    }
    let (lo, hi) = (min_ratio.ln(), 0.0f64);
    (0..size)
        .map(|i| rho_max * (lo + (hi - lo) * i as f64 / (size - 1) as f64).exp())
        .collect()
}

/// Shuffles `0..n` with `seed` and cuts it into `k` contiguous chunks, the
/// first `n % k` one element longer. Each chunk is returned sorted.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut chunk = idx[start..start + len].to_vec();
        chunk.sort_unstable();
        folds.push(chunk);
        start += len;
    }
    folds
}

/// Held-out score `||X U - Y V||_F^2 / n_test`. Components the model lacks
/// are scored as zero `X`-variates against a whitened response variate.
pub fn variate_mse(model: &CcaModel, x_test: &Mat, y_test: &Mat, y_inv_sqrt: &Mat) -> f64 {
    let n_t = x_test.nrows() as f64;
    let mut score = if model.rank() > 0 {
        (x_test * &model.u - y_test * &model.v).norm_squared() / n_t
    } else {
        0.0
    };
    let missing = model.requested_rank.saturating_sub(model.rank());
    if missing > 0 {
        let q = y_test.ncols() as f64;
        let c0 = (y_test * y_inv_sqrt).norm_squared() / (n_t * q);
        score += missing as f64 * c0;
    }
    score
}

fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in test {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Scores of one fold over the whole grid.
fn score_fold(x: &Mat, y: &Mat, opts: &FitOptions, grid: &[f64], test: &[usize]) -> Vec<f64> {
    let train = complement(x.nrows(), test);
    let (x_tr, y_tr) = (select_rows(x, &train), select_rows(y, &train));
    let (x_te, y_te) = (select_rows(x, test), select_rows(y, test));
    let mut scores = vec![f64::INFINITY; grid.len()];
    let fitter = match CcaFitter::new(&x_tr, &y_tr, opts) {
        Ok(f) => f,
        Err(e) => {
            log::debug!("fold setup failed: {e}");
            return scores;
        }
    };
    let y_inv_sqrt = fitter.y_inv_sqrt().as_mat().clone();

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]).then(a.cmp(&b)));
    let mut warm: Option<AdmmState> = None;
    let mut prev: Option<(f64, f64)> = None;
    for i in order {
        let rho = grid[i];
        if let Some((prev_rho, prev_score)) = prev {
            if prev_rho == rho {
                scores[i] = prev_score;
                continue;
            }
        }
        scores[i] = match fitter.fit(rho, warm.as_ref()) {
            Ok(fitted) => {
                if fitted.state.is_some() {
                    warm = fitted.state;
                }
                variate_mse(&fitted.model, &x_te, &y_te, &y_inv_sqrt)
            }
            Err(e) => {
                log::debug!("fit at rho = {rho} failed: {e}");
                f64::INFINITY
            }
        };
        prev = Some((rho, scores[i]));
    }
    scores
}

/// Mean over the folds whose fit succeeded; `inf` if none did.
fn column_means(fold_scores: &[Vec<f64>], len: usize) -> Vec<f64> {
    (0..len)
        .map(|j| {
            let ok: Vec<f64> = fold_scores
                .iter()
                .map(|row| row[j])
                .filter(|s| s.is_finite())
                .collect();
            if ok.is_empty() {
                f64::INFINITY
            } else {
                ok.iter().sum::<f64>() / ok.len() as f64
            }
        })
        .collect()
}

/// Smallest mean; ties go to the smallest `rho`, then the smallest index.
fn select(grid: &[f64], means: &[f64]) -> Option<usize> {
    (0..grid.len())
        .filter(|&j| means[j].is_finite())
        .min_by(|&a, &b| {
            means[a]
                .total_cmp(&means[b])
                .then(grid[a].total_cmp(&grid[b]))
                .then(a.cmp(&b))
        })
}

/// Cross-validation over explicit folds (lists of held-out rows).
pub fn kfold_cv_with_folds(
    x: &Mat,
    y: &Mat,
    opts: &FitOptions,
    grid: &[f64],
    folds: &[Vec<usize>],
    execution: Execution,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty penalty grid".into()));
    }
    if let Some(bad) = grid.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidInput(format!("grid value {bad} is not a finite rho >= 0")));
    }
    if folds.len() < 2 {
        return Err(Error::InvalidInput("need at least two folds".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch("X and Y row counts differ".into()));
    }
    let n = x.nrows();
    if folds.iter().flatten().any(|&i| i >= n) {
        return Err(Error::InvalidInput("fold index out of range".into()));
    }

    let fold_scores = execution.map(folds.to_vec(), |test| score_fold(x, y, opts, grid, &test));
    let mean_scores = column_means(&fold_scores, grid.len());
    let selected_index = select(grid, &mean_scores)
        .ok_or_else(|| Error::CvFailed("every penalty level failed in every fold".into()))?;
    let selected_rho = grid[selected_index];
    let refit = CcaFitter::new(x, y, opts)?.fit(selected_rho, None)?.model;
    Ok(CvReport {
        grid: grid.to_vec(),
        fold_scores,
        mean_scores,
        selected_index,
        selected_rho,
        refit,
    })
}

/// The grid `cv` would use on `(x, y)`.
pub fn resolve_grid(x: &Mat, y: &Mat, opts: &FitOptions, cv: &CvOptions) -> Result<Vec<f64>> {
    if let Some(grid) = &cv.grid {
        return Ok(grid.clone());
    }
    if !opts.penalty.is_tunable() {
        return Ok(vec![0.0]);
    }
    if !(cv.grid_min_ratio > 0.0 && cv.grid_min_ratio <= 1.0) {
        return Err(Error::InvalidInput("grid_min_ratio must lie in (0, 1]".into()));
    }
    let rho_max = CcaFitter::new(x, y, opts)?.rho_max();
    Ok(default_grid(rho_max, cv.grid_size, cv.grid_min_ratio))
}

pub fn kfold_cv(x: &Mat, y: &Mat, opts: &FitOptions, cv: &CvOptions) -> Result<CvReport> {
    let n = x.nrows();
    if cv.folds < 2 || n < 2 * cv.folds {
        return Err(Error::InvalidInput(format!(
            "need k >= 2 and n >= 2k, got k = {}, n = {n}",
            cv.folds
        )));
    }
    let grid = resolve_grid(x, y, opts, cv)?;
    let folds = fold_assignment(n, cv.folds, cv.seed);
    kfold_cv_with_folds(x, y, opts, &grid, &folds, cv.execution)
}
