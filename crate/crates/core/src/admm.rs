//! Penalized multivariate least squares.
//!
//! All three structured penalties share one scaled-form ADMM loop on the
//! objective `(1/n)||Y0 - XB||_F^2 + rho * Pen(B)`:
//!
//! ```text
//! B <- (X'X/n + delta I)^-1 (X'Y0/n + delta (Z - U))
//! Z <- blockwise shrink of (B + U) at rho * w_block / (2 delta)
//! U <- U + B - Z
//! ```
//!
//! The factor 2 in the threshold matches the `1/n` (not `1/2n`) scaling of the
//! loss. The inverse is formed once per design and reused across iterations
//! and across penalty levels; for `p > n` it is applied through the Woodbury
//! identity with an `n x n` factorization.
//!
//! The ridge penalty `rho * tr(B'KB)` has a closed form and is solved directly,
//! in primal form or, when `p > n`, in the dual form
//! `B = K^-1 X' (X K^-1 X' + n rho I)^-1 Y0`.

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphStructure;
use crate::linalg::{l21_norm, pseudo_inverse, spd_inverse, Mat, SymMatrix, DEFAULT_RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmConfig {
    /// Penalty weight, `>= 0`.
    pub rho: f64,
    /// ADMM step parameter, `> 0`.
    pub delta: f64,
    /// Stopping threshold on `||B_t+1 - B_t||_F` and `||B_t+1 - Z_t+1||_F`.
    pub eps: f64,
    pub max_iter: usize,
    /// Record the objective after every iteration. Costs one extra
    /// matrix product per iteration.
    #[serde(default)]
    pub track_objective: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 0.0,
            delta: 1.0,
            eps: 1e-5,
            max_iter: 5000,
            track_objective: false,
        }
    }
}

impl AdmmConfig {
    pub fn with_rho(self, rho: f64) -> Self {
        Self { rho, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidInput(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidInput(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::InvalidInput(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: usize,
    /// `||B - Z||_F` at exit.
    pub primal_residual: f64,
    /// `||B_t+1 - B_t||_F` at exit.
    pub dual_residual: f64,
    pub converged: bool,
    pub objective_history: Vec<f64>,
    /// Set by the graph solver when the component-mean design was rank
    /// deficient and the pseudo-inverse was used.
    #[serde(default)]
    pub deflation_rank_deficient: bool,
}

/// Split and dual iterates, reusable as a warm start for a nearby `rho`.
#[derive(Clone, Debug)]
pub struct AdmmState {
    pub z: Mat,
    pub u: Mat,
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// The coefficient matrix. For the row and group penalties this is the
    /// split iterate `Z`, so untouched rows are exactly zero.
    pub coef: Mat,
    pub trace: SolveTrace,
    pub state: AdmmState,
    /// Graph solver only: the unpenalized component-constant part `Pi B`.
    pub pi_part: Option<Mat>,
}

/// Block soft-thresholding `(1 - t/||x||)_+ x`.
pub fn row_shrink(x: &DVector<f64>, t: f64) -> DVector<f64> {
    let norm = x.norm();
    if norm <= t || norm == 0.0 {
        DVector::zeros(x.len())
    } else {
        x * (1.0 - t / norm)
    }
}

/// Disjoint groups of row indices covering `0..p` exactly once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    p: usize,
    groups: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(p: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; p];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidInput("empty group in partition".into()));
            }
            for &i in g {
                if i >= p {
                    return Err(Error::InvalidInput(format!(
                        "group index {i} outside 0..{p}"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidInput(format!(
                        "index {i} appears in more than one group"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!(
                "index {missing} is not covered by any group"
            )));
        }
        Ok(Self { p, groups })
    }

    /// Consecutive groups of `size`; the last one may be shorter.
    pub fn contiguous(p: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidInput("group size must be positive".into()));
        }
        let groups = (0..p)
            .step_by(size)
            .map(|start| (start..(start + size).min(p)).collect())
            .collect();
        Self::new(p, groups)
    }

    pub fn singletons(p: usize) -> Self {
        Self {
            p,
            groups: (0..p).map(|i| vec![i]).collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

/// How the split variable is shrunk.
#[derive(Clone, Copy, Debug)]
pub enum Blocks<'a> {
    Rows,
    Groups(&'a Partition),
}

impl Blocks<'_> {
    fn shrink(&self, v: &mut Mat, base: f64) {
        match self {
            Blocks::Rows => shrink_rows(v, base),
            Blocks::Groups(part) => {
                for g in part.groups() {
                    let t = base * (g.len() as f64).sqrt();
                    let norm2: f64 = g.iter().map(|&i| v.row(i).norm_squared()).sum();
                    let norm = norm2.sqrt();
                    let scale = if norm <= t || norm == 0.0 { 0.0 } else { 1.0 - t / norm };
                    for &i in g {
                        v.row_mut(i).scale_mut(scale);
                    }
                }
            }
        }
    }

    fn penalty(&self, b: &Mat) -> f64 {
        match self {
            Blocks::Rows => l21_norm(b),
            Blocks::Groups(part) => part
                .groups()
                .iter()
                .map(|g| {
                    let n2: f64 = g.iter().map(|&i| b.row(i).norm_squared()).sum();
                    (g.len() as f64).sqrt() * n2.sqrt()
                })
                .sum(),
        }
    }
}

fn shrink_rows(v: &mut Mat, t: f64) {
    for i in 0..v.nrows() {
        let norm = v.row(i).norm();
        let scale = if norm <= t || norm == 0.0 { 0.0 } else { 1.0 - t / norm };
        v.row_mut(i).scale_mut(scale);
    }
}

/// `(D'D/n + delta I)^-1`, explicit or through Woodbury.
#[derive(Clone, Debug)]
enum RidgeInverse {
    Explicit(Mat),
    Woodbury { design: Mat, inner: Mat, delta: f64 },
}

impl RidgeInverse {
    fn new(design: &Mat, delta: f64) -> Result<Self> {
        let (n, p) = design.shape();
        let nf = n as f64;
        if p <= n {
            let mut a = design.transpose() * design / nf;
            for i in 0..p {
                a[(i, i)] += delta;
            }
            let inv = spd_inverse(&a).ok_or_else(|| {
                Error::RankDeficient("ADMM system matrix is not positive definite".into())
            })?;
            Ok(RidgeInverse::Explicit(inv))
        } else {
            let mut a = design * design.transpose();
            for i in 0..n {
                a[(i, i)] += nf * delta;
            }
            let inner = spd_inverse(&a).ok_or_else(|| {
                Error::RankDeficient("Woodbury inner matrix is not positive definite".into())
            })?;
            Ok(RidgeInverse::Woodbury {
                design: design.clone(),
                inner,
                delta,
            })
        }
    }

    fn apply(&self, rhs: &Mat) -> Mat {
        match self {
            RidgeInverse::Explicit(inv) => inv * rhs,
            RidgeInverse::Woodbury {
                design,
                inner,
                delta,
            } => {
                let xv = design * rhs;
                let w = inner * xv;
                (rhs - design.transpose() * w) / *delta
            }
        }
    }
}

/// The smooth part `(1/n)||Y - DB||^2` with its cached factorization.
#[derive(Clone, Debug)]
struct Quadratic {
    n: usize,
    design: Mat,
    response: Mat,
    cross: Mat,
    gram: Option<Mat>,
    response_sq: f64,
    delta: f64,
    inverse: RidgeInverse,
}

impl Quadratic {
    fn new(design: Mat, response: Mat, delta: f64) -> Result<Self> {
        if delta <= 0.0 || !delta.is_finite() {
            return Err(Error::InvalidInput(format!("delta must be > 0, got {delta}")));
        }
        let n = design.nrows();
        let nf = n as f64;
        let cross = design.transpose() * &response / nf;
        let gram = (design.ncols() <= n).then(|| design.transpose() * &design / nf);
        let response_sq = response.norm_squared() / nf;
        let inverse = RidgeInverse::new(&design, delta)?;
        Ok(Self {
            n,
            design,
            response,
            cross,
            gram,
            response_sq,
            delta,
            inverse,
        })
    }

    fn loss(&self, b: &Mat) -> f64 {
        match &self.gram {
            Some(g) => {
                let v = self.response_sq - 2.0 * b.dot(&self.cross) + b.dot(&(g * b));
                v.max(0.0)
            }
            None => (&self.response - &self.design * b).norm_squared() / self.n as f64,
        }
    }

    fn cols(&self) -> usize {
        self.design.ncols()
    }

    /// Runs ADMM. `projection`, when present, restricts the least-squares
    /// iterate to a subspace that the design already factors through.
    fn admm(
        &self,
        blocks: Blocks<'_>,
        cfg: &AdmmConfig,
        warm: Option<&AdmmState>,
        projection: Option<&Mat>,
    ) -> Result<(Mat, SolveTrace, AdmmState)> {
        cfg.validate()?;
        if (cfg.delta - self.delta).abs() > 0.0 {
            return Err(Error::InvalidInput(format!(
                "problem was factored for delta = {}, config asks for {}",
                self.delta, cfg.delta
            )));
        }
        let (p, q) = (self.cols(), self.cross.ncols());
        let (mut z, mut u) = match warm {
            Some(s) if s.z.shape() == (p, q) && s.u.shape() == (p, q) => (s.z.clone(), s.u.clone()),
            Some(_) => {
                return Err(Error::DimensionMismatch(
                    "warm start has the wrong shape".into(),
                ))
            }
            None => (Mat::zeros(p, q), Mat::zeros(p, q)),
        };
        let base_inv = self.inverse.apply(&self.cross);
        let threshold = cfg.rho / (2.0 * cfg.delta);
        let mut b_prev = z.clone();
        let mut trace = SolveTrace::default();

        for it in 1..=cfg.max_iter {
            let mut diff = &z - &u;
            if let Some(proj) = projection {
                diff = proj * diff;
            }
            let b = &base_inv + self.inverse.apply(&diff) * cfg.delta;
            let mut z_new = &b + &u;
            blocks.shrink(&mut z_new, threshold);
            u += &b - &z_new;

            let dual = (&b - &b_prev).norm();
            let primal = (&b - &z_new).norm();
            z = z_new;
            b_prev = b;
            trace.iterations = it;
            trace.primal_residual = primal;
            trace.dual_residual = dual;
            if cfg.track_objective {
                trace
                    .objective_history
                    .push(self.loss(&z) + cfg.rho * blocks.penalty(&z));
            }
            if dual <= cfg.eps && primal <= cfg.eps {
                trace.converged = true;
                break;
            }
        }
        if !trace.converged {
            log::debug!(
                "ADMM stopped after {} iterations (primal {:e}, dual {:e})",
                trace.iterations,
                trace.primal_residual,
                trace.dual_residual
            );
        }
        Ok((z.clone(), trace, AdmmState { z, u }))
    }
}

fn check_rows(x: &Mat, y0: &Mat) -> Result<()> {
    if x.nrows() != y0.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows but Y0 has {}",
            x.nrows(),
            y0.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("no observations".into()));
    }
    Ok(())
}

/// A factored row- or group-penalized regression, reusable across `rho`.
#[derive(Clone, Debug)]
pub struct RowPenaltyProblem {
    quad: Quadratic,
}

impl RowPenaltyProblem {
    pub fn new(x: &Mat, y0: &Mat, delta: f64) -> Result<Self> {
        check_rows(x, y0)?;
        Ok(Self {
            quad: Quadratic::new(x.clone(), y0.clone(), delta)?,
        })
    }

    pub fn delta(&self) -> f64 {
        self.quad.delta
    }

    pub fn solve(
        &self,
        blocks: Blocks<'_>,
        cfg: &AdmmConfig,
        warm: Option<&AdmmState>,
    ) -> Result<Solution> {
        if let Blocks::Groups(part) = blocks {
            if part.p() != self.quad.cols() {
                return Err(Error::DimensionMismatch(format!(
                    "partition covers {} rows, design has {}",
                    part.p(),
                    self.quad.cols()
                )));
            }
        }
        let (coef, trace, state) = self.quad.admm(blocks, cfg, warm, None)?;
        Ok(Solution {
            coef,
            trace,
            state,
            pi_part: None,
        })
    }

    /// Smallest `rho` with the all-zero solution when `X'X/n = I`; a grid
    /// anchor otherwise.
    pub fn rho_max(&self, blocks: Blocks<'_>) -> f64 {
        let c = &self.quad.cross;
        match blocks {
            Blocks::Rows => 2.0 * c.row_iter().map(|r| r.norm()).fold(0.0, f64::max),
            Blocks::Groups(part) => {
                2.0 * part
                    .groups()
                    .iter()
                    .map(|g| {
                        let n2: f64 = g.iter().map(|&i| c.row(i).norm_squared()).sum();
                        n2.sqrt() / (g.len() as f64).sqrt()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    pub fn objective(&self, blocks: Blocks<'_>, rho: f64, b: &Mat) -> f64 {
        self.quad.loss(b) + rho * blocks.penalty(b)
    }
}

/// `(1/n)||Y0 - XB||^2 + rho ||B||_21`, solved by ADMM.
pub fn solve_sparse_l21(
    x: &Mat,
    y0: &Mat,
    cfg: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<Solution> {
    RowPenaltyProblem::new(x, y0, cfg.delta)?.solve(Blocks::Rows, cfg, warm)
}

/// `(1/n)||Y0 - XB||^2 + rho sum_g sqrt(T_g) ||B_g||_F`, solved by ADMM.
pub fn solve_group_l21(
    x: &Mat,
    y0: &Mat,
    partition: &Partition,
    cfg: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<Solution> {
    RowPenaltyProblem::new(x, y0, cfg.delta)?.solve(Blocks::Groups(partition), cfg, warm)
}

/// Factored total-variation regression `(1/n)||Y0 - XB||^2 + rho ||Gamma B||_21`.
///
/// `B` is split as `Pi B + Gamma^+ Theta`. The component-constant part is
/// unpenalized and is profiled out first: both the response and the edge
/// design `X Gamma^+` are projected off the span of the component-sum
/// features `X 1_C`. ADMM then runs in edge space on `Theta` (`m x q`); for
/// graphs with cycles the least-squares step is kept inside `range(Gamma)`
/// so that `Gamma Gamma^+ Theta = Theta`. Finally `Pi B` is recovered by
/// regressing the remaining residual on the component features.
#[derive(Clone, Debug)]
pub struct GraphTvProblem {
    y0: Mat,
    features_pinv: Mat,
    edge_design: Mat,
    indicator: Mat,
    incidence_pinv: Mat,
    edge_projection: Option<Mat>,
    quad: Option<Quadratic>,
    rank_deficient: bool,
}

impl GraphTvProblem {
    pub fn new(x: &Mat, y0: &Mat, g: &GraphStructure, delta: f64) -> Result<Self> {
        check_rows(x, y0)?;
        if g.p() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} nodes but X has {} columns",
                g.p(),
                x.ncols()
            )));
        }
        let indicator = g.component_indicator();
        let features = x * &indicator;
        let features_pinv = pseudo_inverse(&features, DEFAULT_RANK_TOL);
        let rank = {
            let proj = &features_pinv * &features;
            proj.trace().round() as usize
        };
        let rank_deficient = rank < g.n_components();
        if rank_deficient {
            log::warn!(
                "component-mean design has rank {rank} < {} components; using pseudo-inverse",
                g.n_components()
            );
        }
        let edge_design = x * g.incidence_pinv();
        let quad = if g.n_edges() == 0 {
            None
        } else {
            let d_res = &edge_design - &features * (&features_pinv * &edge_design);
            let y_res = y0 - &features * (&features_pinv * y0);
            Some(Quadratic::new(d_res, y_res, delta)?)
        };
        let edge_projection = (!g.is_forest() && g.n_edges() > 0)
            .then(|| g.incidence() * g.incidence_pinv());
        Ok(Self {
            y0: y0.clone(),
            features_pinv,
            edge_design,
            indicator,
            incidence_pinv: g.incidence_pinv().clone(),
            edge_projection,
            quad,
            rank_deficient,
        })
    }

    pub fn solve(&self, cfg: &AdmmConfig, warm: Option<&AdmmState>) -> Result<Solution> {
        cfg.validate()?;
        let q = self.y0.ncols();
        let (theta, mut trace, state) = match &self.quad {
            Some(quad) => quad.admm(Blocks::Rows, cfg, warm, self.edge_projection.as_ref())?,
            None => {
                let empty = Mat::zeros(0, q);
                let trace = SolveTrace {
                    converged: true,
                    ..SolveTrace::default()
                };
                (empty.clone(), trace, AdmmState { z: empty.clone(), u: empty })
            }
        };
        trace.deflation_rank_deficient = self.rank_deficient;
        let resid = &self.y0 - &self.edge_design * &theta;
        let weights = &self.features_pinv * resid;
        let pi_part = &self.indicator * weights;
        let coef = &pi_part + &self.incidence_pinv * &theta;
        Ok(Solution {
            coef,
            trace,
            state,
            pi_part: Some(pi_part),
        })
    }

    /// Row-sparse anchor computed on the deflated edge design.
    pub fn rho_max(&self) -> f64 {
        match &self.quad {
            Some(quad) => 2.0 * quad.cross.row_iter().map(|r| r.norm()).fold(0.0, f64::max),
            None => 0.0,
        }
    }
}

pub fn solve_graph_tv(
    x: &Mat,
    y0: &Mat,
    g: &GraphStructure,
    cfg: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<Solution> {
    GraphTvProblem::new(x, y0, g, cfg.delta)?.solve(cfg, warm)
}

/// `(1/n)||Y0 - XB||^2` without a penalty.
pub fn least_squares_loss(x: &Mat, y0: &Mat, b: &Mat) -> f64 {
    (y0 - x * b).norm_squared() / x.nrows() as f64
}

/// `(X'X/n + rho K)^-1 X'Y0/n`.
pub fn solve_ridge_primal(x: &Mat, y0: &Mat, k: &SymMatrix, rho: f64) -> Result<Mat> {
    check_rows(x, y0)?;
    if k.dim() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "kernel is {}x{}, X has {} columns",
            k.dim(),
            k.dim(),
            x.ncols()
        )));
    }
    let n = x.nrows() as f64;
    let a = x.transpose() * x / n + k.as_mat() * rho;
    let rhs = x.transpose() * y0 / n;
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::RankDeficient("X'X/n + rho K is singular; increase rho or change K".into())
    })?;
    Ok(chol.solve(&rhs))
}

/// `K^-1 X' (X K^-1 X' + n rho I)^-1 Y0`; needs `K` positive definite and `rho > 0`.
pub fn solve_ridge_dual(x: &Mat, y0: &Mat, k: &SymMatrix, rho: f64) -> Result<Mat> {
    check_rows(x, y0)?;
    if k.dim() != x.ncols() {
        return Err(Error::DimensionMismatch("kernel size differs from X columns".into()));
    }
    if rho <= 0.0 {
        return Err(Error::InvalidInput("dual ridge solve needs rho > 0".into()));
    }
    let k_inv = spd_inverse(k.as_mat())
        .ok_or_else(|| Error::RankDeficient("kernel is not positive definite".into()))?;
    let n = x.nrows();
    let kx = &k_inv * x.transpose();
    let mut m = x * &kx;
    for i in 0..n {
        m[(i, i)] += n as f64 * rho;
    }
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::RankDeficient("dual ridge system is singular".into()))?;
    Ok(kx * chol.solve(y0))
}

/// Exact minimizer of `(1/n)||Y0 - XB||^2 + rho tr(B'KB)`; the dual form is
/// used when `p > n` and `K` is invertible.
pub fn solve_ridge(x: &Mat, y0: &Mat, k: &SymMatrix, rho: f64) -> Result<Mat> {
    if x.ncols() > x.nrows() && rho > 0.0 {
        if let Ok(b) = solve_ridge_dual(x, y0, k, rho) {
            return Ok(b);
        }
    }
    solve_ridge_primal(x, y0, k, rho)
}

/// Penalty family used by [`rho_max`].
#[derive(Clone, Copy, Debug)]
pub enum PenaltyShape<'a> {
    Sparse,
    Group(&'a Partition),
    Graph(&'a GraphStructure),
}

pub fn rho_max(x: &Mat, y0: &Mat, shape: PenaltyShape<'_>) -> Result<f64> {
    match shape {
        PenaltyShape::Sparse => Ok(RowPenaltyProblem::new(x, y0, 1.0)?.rho_max(Blocks::Rows)),
        PenaltyShape::Group(part) => {
            Ok(RowPenaltyProblem::new(x, y0, 1.0)?.rho_max(Blocks::Groups(part)))
        }
        PenaltyShape::Graph(g) => Ok(GraphTvProblem::new(x, y0, g, 1.0)?.rho_max()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn max_abs(m: &Mat) -> f64 {
        m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Design with `X'X/n = I` exactly.
    fn orthonormal_design(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Mat {
        let g = gaussian(n, p, rng);
        let q = g.qr().q();
        q.columns(0, p).into_owned() * (n as f64).sqrt()
    }

    fn tight() -> AdmmConfig {
        AdmmConfig {
            eps: 1e-10,
            max_iter: 50_000,
            ..AdmmConfig::default()
        }
    }

    #[test]
    fn shrink_examples() {
        let x = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(row_shrink(&x, 5.0), DVector::zeros(2));
        assert_eq!(row_shrink(&x, 0.0), x);
        let s = row_shrink(&x, 2.5);
        assert!((s[0] - 1.5).abs() < 1e-15 && (s[1] - 2.0).abs() < 1e-15);
        assert_eq!(row_shrink(&DVector::zeros(3), 1.0), DVector::zeros(3));
    }

    #[test]
    fn zero_penalty_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(30, 5, &mut rng);
        let y = gaussian(30, 2, &mut rng);
        let sol = solve_sparse_l21(&x, &y, &tight(), None).unwrap();
        let ols = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        assert!(max_abs(&(sol.coef - ols)) < 1e-6);
        assert!(sol.trace.converged);
    }

    #[test]
    fn orthonormal_design_prox_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, p, q) = (40, 6, 3);
        let x = orthonormal_design(n, p, &mut rng);
        let y = gaussian(n, q, &mut rng);
        let c = x.transpose() * &y / n as f64;
        let rmax = rho_max(&x, &y, PenaltyShape::Sparse).unwrap();
        let sol = solve_sparse_l21(&x, &y, &tight().with_rho(rmax), None).unwrap();
        assert_eq!(max_abs(&sol.coef), 0.0);

        // B_j = R_{rho/2}(C_j) for the 1/n-scaled loss.
        let rho = 0.5 * rmax;
        let sol = solve_sparse_l21(&x, &y, &tight().with_rho(rho), None).unwrap();
        for j in 0..p {
            let expect = row_shrink(&c.row(j).transpose(), rho / 2.0);
            let got = sol.coef.row(j).transpose();
            assert!((expect - got).amax() < 1e-6);
        }
    }

    #[test]
    fn singleton_groups_match_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(25, 8, &mut rng);
        let y = gaussian(25, 2, &mut rng);
        let cfg = AdmmConfig::default().with_rho(0.3);
        let a = solve_sparse_l21(&x, &y, &cfg, None).unwrap();
        let b = solve_group_l21(&x, &y, &Partition::singletons(8), &cfg, None).unwrap();
        assert!(max_abs(&(a.coef - b.coef)) < 1e-10);
        let part = Partition::singletons(8);
        assert_eq!(
            rho_max(&x, &y, PenaltyShape::Sparse).unwrap(),
            rho_max(&x, &y, PenaltyShape::Group(&part)).unwrap()
        );
    }

    #[test]
    fn single_group_large_rho_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(25, 6, &mut rng);
        let y = gaussian(25, 2, &mut rng);
        let part = Partition::new(6, vec![(0..6).collect()]).unwrap();
        let sol = solve_group_l21(&x, &y, &part, &AdmmConfig::default().with_rho(100.0), None)
            .unwrap();
        assert_eq!(max_abs(&sol.coef), 0.0);
    }

    #[test]
    fn two_groups_orthonormal_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, p, q) = (50, 5, 2);
        let x = orthonormal_design(n, p, &mut rng);
        let y = gaussian(n, q, &mut rng);
        let part = Partition::new(p, vec![vec![0, 1, 2], vec![3, 4]]).unwrap();
        let c = x.transpose() * &y / n as f64;
        let rho = 0.4 * rho_max(&x, &y, PenaltyShape::Group(&part)).unwrap();
        let sol = solve_group_l21(&x, &y, &part, &tight().with_rho(rho), None).unwrap();
        for g in part.groups() {
            let block = crate::linalg::select_rows(&c, g);
            let t = rho * (g.len() as f64).sqrt() / 2.0;
            let norm = block.norm();
            let scale = if norm <= t { 0.0 } else { 1.0 - t / norm };
            let got = crate::linalg::select_rows(&sol.coef, g);
            assert!(max_abs(&(got - block * scale)) < 1e-6);
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1]]).is_err());
        let c = Partition::contiguous(23, 10).unwrap();
        assert_eq!(c.groups().len(), 3);
        assert_eq!(c.groups()[2], vec![20, 21, 22]);
    }

    #[test]
    fn edgeless_graph_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian(30, 4, &mut rng);
        let y = gaussian(30, 2, &mut rng);
        let g = GraphStructure::new(4, &[]).unwrap();
        let sol = solve_graph_tv(&x, &y, &g, &AdmmConfig::default().with_rho(1.0), None).unwrap();
        let ols = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        assert!(max_abs(&(sol.coef - ols)) < 1e-10);
    }

    #[test]
    fn huge_rho_flattens_graph_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = gaussian(40, 6, &mut rng);
        let y = gaussian(40, 2, &mut rng);
        let g = crate::graph::grid_graph(2, 3).unwrap();
        let problem = GraphTvProblem::new(&x, &y, &g, 1.0).unwrap();
        let rho = 1e3 * problem.rho_max();
        let sol = problem.solve(&AdmmConfig::default().with_rho(rho), None).unwrap();
        assert!(g.tv_norm(&sol.coef) <= 1e-6);
    }

    #[test]
    fn graph_parts_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = gaussian(40, 6, &mut rng);
        let y = gaussian(40, 3, &mut rng);
        let g = GraphStructure::new(6, &[(0, 1), (1, 2), (0, 2), (3, 4)]).unwrap();
        let sol = solve_graph_tv(&x, &y, &g, &AdmmConfig::default().with_rho(0.2), None).unwrap();
        let pi = sol.pi_part.clone().unwrap();
        let edge = &sol.coef - &pi;
        assert!(pi.dot(&edge).abs() < 1e-8);
        assert!(max_abs(&(g.projector().as_mat() * &pi - &pi)) < 1e-10);
    }

    #[test]
    fn ridge_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, p) = (30, 4);
        let x = orthonormal_design(n, p, &mut rng);
        let y = gaussian(n, 2, &mut rng);
        let b = solve_ridge(&x, &y, &SymMatrix::identity(p), 0.5).unwrap();
        let expect = x.transpose() * &y / (n as f64 * 1.5);
        assert!(max_abs(&(b - expect)) < 1e-12);

        let x = gaussian(n, p, &mut rng);
        let ols = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        let b = solve_ridge(&x, &y, &SymMatrix::identity(p), 1e-12).unwrap();
        assert!(max_abs(&(b - ols)) < 1e-8);

        let wide = gaussian(5, 8, &mut rng);
        let yw = gaussian(5, 2, &mut rng);
        assert!(matches!(
            solve_ridge(&wide, &yw, &SymMatrix::identity(8), 0.0),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn ridge_primal_matches_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = gaussian(10, 30, &mut rng);
        let y = gaussian(10, 3, &mut rng);
        let k = SymMatrix::identity(30);
        let a = solve_ridge_primal(&x, &y, &k, 0.3).unwrap();
        let b = solve_ridge_dual(&x, &y, &k, 0.3).unwrap();
        assert!((a - b).norm() < 1e-8);
    }

    #[test]
    fn woodbury_path_matches_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = gaussian(12, 20, &mut rng);
        let y = gaussian(12, 2, &mut rng);
        let cfg = AdmmConfig::default().with_rho(0.1);
        let wood = solve_sparse_l21(&x, &y, &cfg, None).unwrap();
        // Same problem with n >= p: pad X with zero rows scaled so X'X/n is
        // unchanged is awkward; instead compare the two inverse routes directly.
        let explicit = {
            let mut a = x.transpose() * &x / 12.0;
            for i in 0..20 {
                a[(i, i)] += 1.0;
            }
            a.try_inverse().unwrap()
        };
        let inv = RidgeInverse::new(&x, 1.0).unwrap();
        let rhs = gaussian(20, 2, &mut rng);
        assert!(max_abs(&(inv.apply(&rhs) - explicit * &rhs)) < 1e-10);
        assert!(wood.trace.converged);
    }

    #[test]
    fn rho_max_of_zero_response_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = gaussian(10, 4, &mut rng);
        let y = Mat::zeros(10, 2);
        assert_eq!(rho_max(&x, &y, PenaltyShape::Sparse).unwrap(), 0.0);
    }

    #[test]
    fn objective_history_settles() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = gaussian(60, 8, &mut rng);
        let y = gaussian(60, 3, &mut rng);
        let cfg = AdmmConfig {
            rho: 0.2,
            track_objective: true,
            eps: 1e-8,
            ..AdmmConfig::default()
        };
        let sol = solve_sparse_l21(&x, &y, &cfg, None).unwrap();
        let h = &sol.trace.objective_history;
        assert_eq!(h.len(), sol.trace.iterations);
        for w in h[5..].windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn warm_start_shape_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = gaussian(10, 4, &mut rng);
        let y = gaussian(10, 2, &mut rng);
        let bad = AdmmState {
            z: Mat::zeros(3, 2),
            u: Mat::zeros(3, 2),
        };
        assert!(solve_sparse_l21(&x, &y, &AdmmConfig::default(), Some(&bad)).is_err());
    }
}
