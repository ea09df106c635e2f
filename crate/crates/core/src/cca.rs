//! Canonical correlation estimators built on reduced-rank regression.
//!
//! Every estimator follows the same three steps:
//!
//! 1. whiten the response, `Y0 = Y S_Y^{-1/2}`;
//! 2. regress `Y0` on `X` (ordinary, penalized or ridge least squares) to get `B`;
//! 3. take the top-`r` SVD `S_X^{1/2} B = U0 L V0'` and map back:
//!    `V = S_Y^{-1/2} V0` and `U = B V0 L^{-1}` (or `U = S_X^{-1/2} U0`).
//!
//! For the row-sparse penalties step 3 is restricted to the selected rows.
//! For dense fits (graph, ridge) it uses `XB / sqrt(n)`, whose Gram matrix
//! equals that of `S_X^{1/2} B`, so `L` and `V0` are obtained without a
//! `p x p` square root.

use std::sync::Arc;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmConfig, AdmmState, Blocks, GraphTvProblem, Partition, RowPenaltyProblem, SolveTrace};
use crate::error::{Error, Result};
use crate::graph::GraphStructure;
use crate::linalg::{
    ledoit_wolf, sample_covariance, select_cols, select_rows, sym_inv_sqrt_with_rank, sym_pseudo_inverse,
    sym_sqrt, top_r_svd, Centering, Mat, SvdTriple, SymMatrix, DEFAULT_PSD_TOL, DEFAULT_RANK_TOL,
};

/// Canonical correlations at or below this value are dropped from a model.
pub const MIN_CORRELATION: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum URecovery {
    /// `U = B V0 L^{-1}`.
    #[default]
    ViaB,
    /// `U = S_X^{-1/2} U0`.
    ViaSqrt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rrr,
    MinNorm,
    GepOracle,
    Sparse,
    Group,
    Graph,
    Ridge,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rrr => "rrr",
            Method::MinNorm => "pinv",
            Method::GepOracle => "gep",
            Method::Sparse => "sparse",
            Method::Group => "group",
            Method::Graph => "graph",
            Method::Ridge => "ridge",
        }
    }
}

/// Regression step used to estimate `B`.
#[derive(Clone, Debug)]
pub enum Penalty {
    /// Ordinary least squares; needs a full-rank `S_X`.
    None,
    /// Minimum-norm least squares through the pseudo-inverse of `S_X`.
    MinNorm,
    /// `rho ||B||_21`.
    Sparse { rho: f64 },
    /// `rho sum_g sqrt(|g|) ||B_g||_F`.
    Group { partition: Arc<Partition>, rho: f64 },
    /// `rho ||Gamma B||_21`.
    Graph { graph: Arc<GraphStructure>, rho: f64 },
    /// `rho tr(B'KB)`.
    Ridge { kernel: Arc<SymMatrix>, rho: f64 },
}

impl Penalty {
    pub fn rho(&self) -> f64 {
        match self {
            Penalty::None | Penalty::MinNorm => 0.0,
            Penalty::Sparse { rho }
            | Penalty::Group { rho, .. }
            | Penalty::Graph { rho, .. }
            | Penalty::Ridge { rho, .. } => *rho,
        }
    }

    pub fn with_rho(&self, rho: f64) -> Penalty {
        match self {
            Penalty::None => Penalty::None,
            Penalty::MinNorm => Penalty::MinNorm,
            Penalty::Sparse { .. } => Penalty::Sparse { rho },
            Penalty::Group { partition, .. } => Penalty::Group {
                partition: partition.clone(),
                rho,
            },
            Penalty::Graph { graph, .. } => Penalty::Graph {
                graph: graph.clone(),
                rho,
            },
            Penalty::Ridge { kernel, .. } => Penalty::Ridge {
                kernel: kernel.clone(),
                rho,
            },
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Penalty::None => Method::Rrr,
            Penalty::MinNorm => Method::MinNorm,
            Penalty::Sparse { .. } => Method::Sparse,
            Penalty::Group { .. } => Method::Group,
            Penalty::Graph { .. } => Method::Graph,
            Penalty::Ridge { .. } => Method::Ridge,
        }
    }

    /// Whether the fit depends on `rho` at all.
    pub fn is_tunable(&self) -> bool {
        !matches!(self, Penalty::None | Penalty::MinNorm)
    }

    /// Whether `B` comes out row-sparse.
    fn selects_rows(&self) -> bool {
        matches!(self, Penalty::Sparse { .. } | Penalty::Group { .. })
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Number of canonical pairs `r`.
    pub rank: usize,
    pub penalty: Penalty,
    /// Ledoit-Wolf shrinkage of `S_Y` before whitening.
    pub shrink_sigma_y: bool,
    pub u_recovery: URecovery,
    /// Solver settings. The `rho` field is ignored; the penalty carries it.
    pub admm: AdmmConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            rank: 1,
            penalty: Penalty::None,
            shrink_sigma_y: false,
            u_recovery: URecovery::ViaB,
            admm: AdmmConfig::default(),
        }
    }
}

impl FitOptions {
    pub fn with_penalty(&self, penalty: Penalty) -> Self {
        Self {
            penalty,
            ..self.clone()
        }
    }

    fn validate(&self, x: &Mat, y: &Mat) -> Result<()> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows, Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::InvalidInput("need at least two observations".into()));
        }
        if self.rank == 0 || self.rank > y.ncols() {
            return Err(Error::InvalidInput(format!(
                "rank must lie in 1..={}, got {}",
                y.ncols(),
                self.rank
            )));
        }
        let rho = self.penalty.rho();
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidInput(format!("rho must be >= 0, got {rho}")));
        }
        match &self.penalty {
            Penalty::Group { partition, .. } if partition.p() != x.ncols() => {
                Err(Error::DimensionMismatch(format!(
                    "partition covers {} covariates, X has {}",
                    partition.p(),
                    x.ncols()
                )))
            }
            Penalty::Graph { graph, .. } if graph.p() != x.ncols() => {
                Err(Error::DimensionMismatch(format!(
                    "graph has {} nodes, X has {} columns",
                    graph.p(),
                    x.ncols()
                )))
            }
            Penalty::Ridge { kernel, .. } if kernel.dim() != x.ncols() => {
                Err(Error::DimensionMismatch(format!(
                    "kernel is {0}x{0}, X has {1} columns",
                    kernel.dim(),
                    x.ncols()
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Estimated canonical directions and correlations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcaModel {
    /// `p x r` directions for `X`.
    pub u: Mat,
    /// `q x r` directions for `Y`.
    pub v: Mat,
    /// Nonincreasing canonical correlations, one per column of `u` and `v`.
    pub correlations: Vec<f64>,
    /// Selected covariates (0-based) for the row-sparse penalties.
    pub support: Option<Vec<usize>>,
    pub method: Method,
    pub rho: f64,
    pub requested_rank: usize,
    pub warnings: Vec<String>,
}

impl CcaModel {
    /// Effective number of canonical pairs.
    pub fn rank(&self) -> usize {
        self.correlations.len()
    }

    /// `U' S_X U`, which equals the identity for unpenalized full-rank fits.
    pub fn u_gram(&self, x: &Mat) -> Mat {
        let xu = x * &self.u;
        xu.transpose() * &xu / x.nrows() as f64
    }

    fn empty(p: usize, q: usize, method: Method, rho: f64, requested_rank: usize) -> Self {
        Self {
            u: Mat::zeros(p, 0),
            v: Mat::zeros(q, 0),
            correlations: Vec::new(),
            support: Some(Vec::new()),
            method,
            rho,
            requested_rank,
            warnings: vec!["no covariate selected".into()],
        }
    }
}

/// `Y S_Y^{-1/2}` together with the inverse square root used.
pub fn normalize_y(y: &Mat, shrink: bool) -> Result<(Mat, SymMatrix)> {
    let sigma = if shrink {
        ledoit_wolf(y)?.covariance
    } else {
        sample_covariance(y, Centering::None)?
    };
    let (inv_sqrt, rank) = sym_inv_sqrt_with_rank(&sigma, DEFAULT_RANK_TOL)?;
    if rank < y.ncols() {
        return Err(Error::RankDeficient(format!(
            "response covariance has rank {rank} < {}; enable shrinkage",
            y.ncols()
        )));
    }
    Ok((y * inv_sqrt.as_mat(), inv_sqrt))
}

#[derive(Clone, Debug)]
enum Solver {
    Ols,
    MinNorm,
    Rows(RowPenaltyProblem),
    Graph(GraphTvProblem),
    Ridge(Arc<SymMatrix>),
}

/// A fit at one penalty level, including the solver state for warm starts.
#[derive(Clone, Debug)]
pub struct Fitted {
    /// May have rank 0 when the penalty removed every covariate.
    pub model: CcaModel,
    pub coef: Mat,
    pub trace: Option<SolveTrace>,
    pub state: Option<AdmmState>,
}

/// Whitened data and a factored regression, reusable across penalty levels.
#[derive(Clone, Debug)]
pub struct CcaFitter {
    x: Mat,
    y0: Mat,
    y_inv_sqrt: SymMatrix,
    opts: FitOptions,
    solver: Solver,
}

impl CcaFitter {
    pub fn new(x: &Mat, y: &Mat, opts: &FitOptions) -> Result<Self> {
        opts.validate(x, y)?;
        let (y0, y_inv_sqrt) = normalize_y(y, opts.shrink_sigma_y)?;
        let delta = opts.admm.delta;
        let solver = match &opts.penalty {
            Penalty::None => Solver::Ols,
            Penalty::MinNorm => Solver::MinNorm,
            Penalty::Sparse { .. } | Penalty::Group { .. } => {
                Solver::Rows(RowPenaltyProblem::new(x, &y0, delta)?)
            }
            Penalty::Graph { graph, .. } => Solver::Graph(GraphTvProblem::new(x, &y0, graph, delta)?),
            Penalty::Ridge { kernel, .. } => Solver::Ridge(kernel.clone()),
        };
        Ok(Self {
            x: x.clone(),
            y0,
            y_inv_sqrt,
            opts: opts.clone(),
            solver,
        })
    }

    pub fn whitened_response(&self) -> &Mat {
        &self.y0
    }

    pub fn y_inv_sqrt(&self) -> &SymMatrix {
        &self.y_inv_sqrt
    }

    /// Penalty level above which the structured solvers return (nearly) zero.
    pub fn rho_max(&self) -> f64 {
        match (&self.solver, &self.opts.penalty) {
            (Solver::Rows(prob), Penalty::Group { partition, .. }) => {
                prob.rho_max(Blocks::Groups(partition))
            }
            (Solver::Rows(prob), _) => prob.rho_max(Blocks::Rows),
            (Solver::Graph(prob), _) => prob.rho_max(),
            (Solver::Ridge(_), _) => {
                // Scale of X'Y0/n, so that rho_max * K dominates X'X/n.
                let n = self.x.nrows() as f64;
                let gram = self.x.transpose() * &self.x / n;
                gram.diagonal().max().max(f64::MIN_POSITIVE)
            }
            _ => 0.0,
        }
    }

    /// Fits at penalty level `rho`. A rank-0 model signals that no covariate
    /// survived the penalty.
    pub fn fit(&self, rho: f64, warm: Option<&AdmmState>) -> Result<Fitted> {
        let penalty = self.opts.penalty.with_rho(rho);
        let method = penalty.method();
        let p = self.x.ncols();
        let n = self.x.nrows() as f64;
        let cfg = self.opts.admm.with_rho(rho);

        let (coef, trace, state) = match &self.solver {
            Solver::Ols => {
                let sx = sample_covariance(&self.x, Centering::None)?;
                let rhs = self.x.transpose() * &self.y0 / n;
                let chol = Cholesky::new(sx.into_mat()).ok_or_else(|| {
                    Error::RankDeficient(format!(
                        "predictor covariance is singular (p = {p}, n = {}); use a penalty or the pseudo-inverse",
                        self.x.nrows()
                    ))
                })?;
                (chol.solve(&rhs), None, None)
            }
            Solver::MinNorm => {
                let sx = sample_covariance(&self.x, Centering::None)?;
                let (pinv, _) = sym_pseudo_inverse(&sx, DEFAULT_RANK_TOL);
                let rhs = self.x.transpose() * &self.y0 / n;
                (pinv.as_mat() * rhs, None, None)
            }
            Solver::Rows(prob) => {
                let blocks = match &penalty {
                    Penalty::Group { partition, .. } => Blocks::Groups(partition),
                    _ => Blocks::Rows,
                };
                let sol = prob.solve(blocks, &cfg, warm)?;
                (sol.coef, Some(sol.trace), Some(sol.state))
            }
            Solver::Graph(prob) => {
                let sol = prob.solve(&cfg, warm)?;
                (sol.coef, Some(sol.trace), Some(sol.state))
            }
            Solver::Ridge(kernel) => (
                crate::admm::solve_ridge(&self.x, &self.y0, kernel, rho)?,
                None,
                None,
            ),
        };

        let mut model = self.directions(&coef, &penalty)?;
        model.method = method;
        model.rho = rho;
        if let Some(t) = &trace {
            if !t.converged {
                model.warnings.push(format!(
                    "ADMM did not converge in {} iterations (primal {:.3e}, dual {:.3e})",
                    t.iterations, t.primal_residual, t.dual_residual
                ));
            }
            if t.deflation_rank_deficient {
                model
                    .warnings
                    .push("component-mean design rank deficient; pseudo-inverse used".into());
            }
        }
        Ok(Fitted {
            model,
            coef,
            trace,
            state,
        })
    }

    /// Step 3: SVD and direction recovery from a regression estimate.
    fn directions(&self, coef: &Mat, penalty: &Penalty) -> Result<CcaModel> {
        let (p, q) = (self.x.ncols(), self.y0.ncols());
        let n = self.x.nrows() as f64;
        let r = self.opts.rank;
        let method = penalty.method();
        let want_sqrt = self.opts.u_recovery == URecovery::ViaSqrt;

        // Rows entering the SVD, the matrix whose SVD is taken, and (for the
        // square-root recovery) the matching inverse square root.
        let (rows, target, inv_sqrt): (Option<Vec<usize>>, Mat, Option<Mat>) = if penalty.selects_rows()
        {
            let support: Vec<usize> = (0..p).filter(|&i| coef.row(i).norm() > 0.0).collect();
            if support.is_empty() {
                return Ok(CcaModel::empty(p, q, method, penalty.rho(), r));
            }
            let xs = select_cols(&self.x, &support);
            let s_ii = sample_covariance(&xs, Centering::None)?;
            let root = sym_sqrt(&s_ii, DEFAULT_PSD_TOL)?;
            let target = root.as_mat() * select_rows(coef, &support);
            let inv = want_sqrt.then(|| sym_pseudo_inverse(&root, DEFAULT_RANK_TOL).0.into_mat());
            (Some(support), target, inv)
        } else if matches!(penalty, Penalty::None | Penalty::MinNorm) || want_sqrt {
            let sx = sample_covariance(&self.x, Centering::None)?;
            let root = sym_sqrt(&sx, DEFAULT_PSD_TOL)?;
            let target = root.as_mat() * coef;
            let inv = want_sqrt.then(|| sym_pseudo_inverse(&root, DEFAULT_RANK_TOL).0.into_mat());
            (None, target, inv)
        } else {
            (None, &self.x * coef / n.sqrt(), None)
        };

        let k = r.min(target.nrows()).min(target.ncols());
        let svd = top_r_svd(&target, k)?;
        let keep = svd.singulars.iter().filter(|&&s| s > MIN_CORRELATION).count();
        let mut warnings = Vec::new();
        if keep < r {
            warnings.push(format!("effective rank reduced from {r} to {keep}"));
        }
        if keep == 0 {
            let mut m = CcaModel::empty(p, q, method, penalty.rho(), r);
            m.support = rows;
            m.warnings = warnings;
            return Ok(m);
        }
        let svd = SvdTriple {
            left: svd.left.columns(0, keep).into_owned(),
            singulars: svd.singulars.rows(0, keep).into_owned(),
            right: svd.right.columns(0, keep).into_owned(),
        };

        let v = self.y_inv_sqrt.as_mat() * &svd.right;
        let u = match inv_sqrt {
            Some(inv) => {
                let local = inv * &svd.left;
                match &rows {
                    Some(support) => {
                        let mut full = Mat::zeros(p, keep);
                        for (a, &i) in support.iter().enumerate() {
                            full.row_mut(i).copy_from(&local.row(a));
                        }
                        full
                    }
                    None => local,
                }
            }
            None => {
                let mut u = coef * &svd.right;
                for (j, mut col) in u.column_iter_mut().enumerate() {
                    col /= svd.singulars[j];
                }
                u
            }
        };

        Ok(CcaModel {
            u,
            v,
            correlations: svd.singulars.iter().copied().collect(),
            support: rows,
            method,
            rho: penalty.rho(),
            requested_rank: r,
            warnings,
        })
    }
}

/// Unpenalized reduced-rank-regression CCA. Requires full-rank `S_X` and `S_Y`.
pub fn fit_cca_rrr(x: &Mat, y: &Mat, opts: &FitOptions) -> Result<CcaModel> {
    let opts = opts.with_penalty(Penalty::None);
    Ok(CcaFitter::new(x, y, &opts)?.fit(0.0, None)?.model)
}

/// Unpenalized fit that replaces `S_X^{-1}` by its pseudo-inverse.
pub fn fit_cca_min_norm(x: &Mat, y: &Mat, opts: &FitOptions) -> Result<CcaModel> {
    let opts = opts.with_penalty(Penalty::MinNorm);
    Ok(CcaFitter::new(x, y, &opts)?.fit(0.0, None)?.model)
}

/// Penalized fit at the penalty level carried by `opts.penalty`. An empty
/// selection is reported as [`Error::EmptyModel`].
pub fn fit_cca_penalized(x: &Mat, y: &Mat, opts: &FitOptions) -> Result<CcaModel> {
    let rho = opts.penalty.rho();
    let fitted = CcaFitter::new(x, y, opts)?.fit(rho, None)?;
    if fitted.model.rank() == 0 {
        return Err(Error::EmptyModel { rho });
    }
    Ok(fitted.model)
}

/// Dispatches on the penalty.
pub fn fit(x: &Mat, y: &Mat, opts: &FitOptions) -> Result<CcaModel> {
    match opts.penalty {
        Penalty::None => fit_cca_rrr(x, y, opts),
        Penalty::MinNorm => fit_cca_min_norm(x, y, opts),
        _ => fit_cca_penalized(x, y, opts),
    }
}

/// Classical CCA: SVD of `S_X^{-1/2} S_XY S_Y^{-1/2}`.
pub fn cca_gep_oracle(x: &Mat, y: &Mat, r: usize) -> Result<CcaModel> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch("X and Y row counts differ".into()));
    }
    let (p, q) = (x.ncols(), y.ncols());
    if r == 0 || r > p.min(q) {
        return Err(Error::InvalidInput(format!("rank must lie in 1..={}", p.min(q))));
    }
    let n = x.nrows() as f64;
    let sx = sample_covariance(x, Centering::None)?;
    let sy = sample_covariance(y, Centering::None)?;
    let sxy = x.transpose() * y / n;
    let (kx, rank_x) = sym_inv_sqrt_with_rank(&sx, DEFAULT_RANK_TOL)?;
    let (ky, rank_y) = sym_inv_sqrt_with_rank(&sy, DEFAULT_RANK_TOL)?;
    if rank_x < p || rank_y < q {
        return Err(Error::RankDeficient(format!(
            "covariances have ranks {rank_x}/{p} and {rank_y}/{q}"
        )));
    }
    let t = kx.as_mat() * sxy * ky.as_mat();
    let svd = top_r_svd(&t, r)?;
    Ok(CcaModel {
        u: kx.as_mat() * &svd.left,
        v: ky.as_mat() * &svd.right,
        correlations: svd.singulars.iter().copied().collect(),
        support: None,
        method: Method::GepOracle,
        rho: 0.0,
        requested_rank: r,
        warnings: Vec::new(),
    })
}

/// `(X U, Y V)` without re-normalization.
pub fn canonical_variates(model: &CcaModel, x: &Mat, y: &Mat) -> Result<(Mat, Mat)> {
    if x.ncols() != model.u.nrows() || y.ncols() != model.v.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} and {} columns, got {} and {}",
            model.u.nrows(),
            model.v.nrows(),
            x.ncols(),
            y.ncols()
        )));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch("X and Y row counts differ".into()));
    }
    Ok((x * &model.u, y * &model.v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::subspace_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn max_abs(m: &Mat) -> f64 {
        m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Correlated pair: Y = X A + noise.
    fn correlated(n: usize, p: usize, q: usize, seed: u64) -> (Mat, Mat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(n, p, &mut rng);
        let a = gaussian(p, q, &mut rng) * 0.5;
        let y = &x * a + gaussian(n, q, &mut rng);
        (x, y)
    }

    fn opts(rank: usize) -> FitOptions {
        FitOptions {
            rank,
            ..FitOptions::default()
        }
    }

    #[test]
    fn whitening_round_trip() {
        let (_, y) = correlated(100, 3, 4, 1);
        let (y0, _) = normalize_y(&y, false).unwrap();
        let cov = y0.transpose() * &y0 / 100.0;
        assert!(max_abs(&(cov - Mat::identity(4, 4))) < 1e-8);

        let scaled = &y * -3.5;
        let (y0s, _) = normalize_y(&scaled, false).unwrap();
        let _ = y0s; // same span; whitening fixes the scale
        let (y0a, _) = normalize_y(&y, false).unwrap();
        assert!(max_abs(&(normalize_y(&(&y * 3.5), false).unwrap().0 - y0a)) < 1e-10);
    }

    #[test]
    fn whitening_identity_covariance_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = gaussian(50, 3, &mut rng).qr().q() * (50f64).sqrt();
        let (y0, _) = normalize_y(&y, false).unwrap();
        assert!(max_abs(&(y0 - &y)) < 1e-10);
    }

    #[test]
    fn rank_deficient_response_needs_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = gaussian(40, 2, &mut rng);
        let y = Mat::from_fn(40, 3, |i, j| if j < 2 { base[(i, j)] } else { base[(i, 0)] });
        assert!(matches!(normalize_y(&y, false), Err(Error::RankDeficient(_))));
        assert!(normalize_y(&y, true).is_ok());
    }

    #[test]
    fn self_correlation_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(200, 3, &mut rng);
        let m = fit_cca_rrr(&x, &x, &opts(3)).unwrap();
        for c in &m.correlations {
            assert!((c - 1.0).abs() < 1e-8);
        }
        assert!(subspace_distance(&m.u, &m.v).unwrap() < 1e-8);
    }

    #[test]
    fn independent_blocks_have_small_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(5000, 3, &mut rng);
        let y = gaussian(5000, 3, &mut rng);
        let m = fit_cca_rrr(&x, &y, &opts(3)).unwrap();
        assert!(m.correlations.iter().all(|&c| c <= 0.1));
    }

    #[test]
    fn rrr_matches_gep_oracle_and_normalizes() {
        let (x, y) = correlated(400, 5, 4, 6);
        let m = fit_cca_rrr(&x, &y, &opts(3)).unwrap();
        let o = cca_gep_oracle(&x, &y, 3).unwrap();
        for (a, b) in m.correlations.iter().zip(&o.correlations) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(max_abs(&(m.u_gram(&x) - Mat::identity(3, 3))) < 1e-6);
        let yv = &y * &m.v;
        assert!(max_abs(&(yv.transpose() * &yv / 400.0 - Mat::identity(3, 3))) < 1e-6);
        let via_sqrt = fit_cca_rrr(
            &x,
            &y,
            &FitOptions {
                u_recovery: URecovery::ViaSqrt,
                ..opts(3)
            },
        )
        .unwrap();
        assert!(subspace_distance(&m.u, &via_sqrt.u).unwrap() < 1e-6);
    }

    #[test]
    fn singular_design_is_rank_deficient() {
        let (x, y) = correlated(10, 20, 2, 7);
        assert!(matches!(fit_cca_rrr(&x, &y, &opts(1)), Err(Error::RankDeficient(_))));
        assert!(fit_cca_min_norm(&x, &y, &opts(1)).is_ok());
    }

    #[test]
    fn sparse_without_penalty_matches_rrr() {
        let (x, y) = correlated(300, 6, 3, 8);
        let o = FitOptions {
            rank: 2,
            penalty: Penalty::Sparse { rho: 0.0 },
            admm: AdmmConfig {
                eps: 1e-10,
                max_iter: 20_000,
                ..AdmmConfig::default()
            },
            ..FitOptions::default()
        };
        let a = fit_cca_penalized(&x, &y, &o).unwrap();
        let b = fit_cca_rrr(&x, &y, &opts(2)).unwrap();
        assert!(subspace_distance(&a.u, &b.u).unwrap() < 1e-5);
        assert!(subspace_distance(&a.v, &b.v).unwrap() < 1e-5);
    }

    #[test]
    fn huge_penalty_is_empty_model() {
        let (x, y) = correlated(100, 6, 3, 9);
        let o = FitOptions {
            rank: 2,
            penalty: Penalty::Sparse { rho: 1e6 },
            ..FitOptions::default()
        };
        assert!(matches!(fit_cca_penalized(&x, &y, &o), Err(Error::EmptyModel { .. })));
    }

    #[test]
    fn sparse_support_matches_nonzero_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = gaussian(200, 30, &mut rng);
        let mut a = Mat::zeros(30, 3);
        for i in 0..4 {
            for j in 0..3 {
                a[(i, j)] = 1.0;
            }
        }
        let y = &x * a + gaussian(200, 3, &mut rng);
        let fitter = CcaFitter::new(
            &x,
            &y,
            &FitOptions {
                rank: 2,
                penalty: Penalty::Sparse { rho: 0.0 },
                ..FitOptions::default()
            },
        )
        .unwrap();
        let fitted = fitter.fit(0.3 * fitter.rho_max(), None).unwrap();
        let support = fitted.model.support.clone().unwrap();
        let nonzero: Vec<usize> = (0..30).filter(|&i| fitted.coef.row(i).norm() > 0.0).collect();
        assert_eq!(support, nonzero);
        for i in 0..30 {
            if !support.contains(&i) {
                assert_eq!(fitted.model.u.row(i).norm(), 0.0);
            }
        }
        assert!(support.iter().take(4).eq([0, 1, 2, 3].iter()));
    }

    #[test]
    fn whitened_fit_svd_matches_sqrt_route() {
        let (x, y) = correlated(80, 5, 3, 11);
        let (y0, _) = normalize_y(&y, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = gaussian(5, 3, &mut rng);
        let n = 80f64;
        let a = top_r_svd(&(&x * &b / n.sqrt()), 3).unwrap();
        let sx = sample_covariance(&x, Centering::None).unwrap();
        let root = sym_sqrt(&sx, DEFAULT_PSD_TOL).unwrap();
        let c = top_r_svd(&(root.as_mat() * &b), 3).unwrap();
        for i in 0..3 {
            assert!((a.singulars[i] - c.singulars[i]).abs() < 1e-8);
            let dot = a.right.column(i).dot(&c.right.column(i)).abs();
            assert!((dot - 1.0).abs() < 1e-8);
        }
        let _ = y0;
    }

    #[test]
    fn ridge_and_graph_fits_run() {
        let (x, y) = correlated(120, 6, 3, 13);
        let k = Arc::new(SymMatrix::identity(6));
        let m = fit_cca_penalized(
            &x,
            &y,
            &FitOptions {
                rank: 2,
                penalty: Penalty::Ridge { kernel: k, rho: 0.01 },
                ..FitOptions::default()
            },
        )
        .unwrap();
        let b = fit_cca_rrr(&x, &y, &opts(2)).unwrap();
        assert!(subspace_distance(&m.u, &b.u).unwrap() < 0.05);

        let g = Arc::new(crate::graph::grid_graph(2, 3).unwrap());
        let m = fit_cca_penalized(
            &x,
            &y,
            &FitOptions {
                rank: 2,
                penalty: Penalty::Graph { graph: g, rho: 0.0 },
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert!(subspace_distance(&m.u, &b.u).unwrap() < 1e-3);
    }

    #[test]
    fn variates_examples() {
        let (x, y) = correlated(50, 3, 2, 14);
        let mut model = fit_cca_rrr(&x, &y, &opts(1)).unwrap();
        model.u = Mat::zeros(3, 1);
        let (xu, _) = canonical_variates(&model, &x, &y).unwrap();
        assert_eq!(max_abs(&xu), 0.0);
        model.u[(0, 0)] = 1.0;
        let (xu, _) = canonical_variates(&model, &x, &y).unwrap();
        assert_eq!(xu.column(0), x.column(0));
        assert!(canonical_variates(&model, &y, &y).is_err());
    }

    #[test]
    fn scale_equivariance() {
        let (x, y) = correlated(200, 4, 3, 15);
        let d = [2.0, 0.5, -3.0, 1.5];
        let xd = Mat::from_fn(200, 4, |i, j| x[(i, j)] * d[j]);
        let a = fit_cca_rrr(&x, &y, &opts(2)).unwrap();
        let b = fit_cca_rrr(&xd, &y, &opts(2)).unwrap();
        let scaled = Mat::from_fn(4, 2, |i, j| b.u[(i, j)] * d[i]);
        assert!(max_abs(&(scaled - &a.u)) < 1e-8);
    }
}
