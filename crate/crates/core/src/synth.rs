//! Synthetic canonical-pair models and a Gaussian sampler.
//!
//! All three regimes share the covariance layout
//! `Sigma_X = blockdiag(A A', I) + eps I` with `A` a random `p1 x r_pca`
//! orthonormal matrix (and the same for `Sigma_Y`), and differ only in how
//! the true directions `U*` are drawn.

use nalgebra::DVector;
use rand::distr::{Distribution, Uniform};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::grid_graph;
use crate::linalg::{sym_eigen, sym_inv_sqrt_with_rank, sym_pseudo_inverse, sym_sqrt, Mat, SymMatrix, DEFAULT_PSD_TOL};

const MAX_RETRIES: usize = 100;
const GRAM_RANK_TOL: f64 = 1e-10;
const JOINT_PSD_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    High,
    Medium,
    Low,
}

impl Signal {
    pub fn interval(self) -> (f64, f64) {
        match self {
            Signal::High => (0.75, 0.9),
            Signal::Medium => (0.55, 0.7),
            Signal::Low => (0.35, 0.5),
        }
    }
}

/// `r` equally spaced canonical correlations covering the signal interval,
/// largest first. A single value sits at the midpoint.
pub fn signal_lambdas(signal: Signal, r: usize) -> Vec<f64> {
    let (lo, hi) = signal.interval();
    match r {
        0 => Vec::new(),
        1 => vec![(lo + hi) / 2.0],
        _ => (0..r)
            .map(|i| hi - (hi - lo) * i as f64 / (r - 1) as f64)
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Regime {
    /// `n_nnz` nonzero rows of `U*` at random positions.
    Sparse { n_nnz: usize },
    /// `active_groups` of the contiguous groups of `group_size` rows are nonzero.
    Group { group_size: usize, active_groups: usize },
    /// `U* = Gamma^+ U~` on a `rows x cols` grid, `U~` with `edge_support`
    /// nonzero edge rows. Requires `p = rows * cols`.
    Graph { rows: usize, cols: usize, edge_support: usize },
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Sparse { .. } => "sparse",
            Regime::Group { .. } => "group",
            Regime::Graph { .. } => "graph",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub r_pca: usize,
    pub p1: usize,
    pub regime: Regime,
    pub signal: Signal,
    pub seed: u64,
    /// Added to the diagonal of both covariance blocks.
    #[serde(default)]
    pub ridge_eps: f64,
}

impl SimConfig {
    /// Sparse regime with `p1 = 20`, `r_pca = 5`, `n_nnz = 10`.
    pub fn sparse(n: usize, p: usize, q: usize, r: usize, signal: Signal, seed: u64) -> Self {
        Self {
            n,
            p,
            q,
            r,
            r_pca: 5,
            p1: 20,
            regime: Regime::Sparse { n_nnz: 10 },
            signal,
            seed,
            ridge_eps: 0.0,
        }
    }

    /// Group regime: groups of 10 rows, 5 of them active.
    pub fn group(n: usize, p: usize, q: usize, r: usize, signal: Signal, seed: u64) -> Self {
        Self {
            regime: Regime::Group {
                group_size: 10,
                active_groups: 5,
            },
            ..Self::sparse(n, p, q, r, signal, seed)
        }
    }

    /// Graph regime on a `rows x cols` grid with 5 active edges.
    pub fn graph(n: usize, rows: usize, cols: usize, q: usize, r: usize, signal: Signal, seed: u64) -> Self {
        Self {
            regime: Regime::Graph {
                rows,
                cols,
                edge_support: 5,
            },
            ..Self::sparse(n, rows * cols, q, r, signal, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.n == 0 || self.p == 0 || self.q == 0 || self.r == 0 {
            return bad("n, p, q and r must be positive".into());
        }
        if self.r > self.q || self.r > self.p {
            return bad(format!("r = {} exceeds min(p, q)", self.r));
        }
        if self.r_pca == 0 || self.r_pca > self.p1 || self.p1 > self.p {
            return bad(format!(
                "need 1 <= r_pca <= p1 <= p, got r_pca = {}, p1 = {}, p = {}",
                self.r_pca, self.p1, self.p
            ));
        }
        if !(self.ridge_eps >= 0.0 && self.ridge_eps.is_finite()) {
            return bad("ridge_eps must be >= 0".into());
        }
        match self.regime {
            Regime::Sparse { n_nnz } => {
                if n_nnz == 0 || n_nnz > self.p {
                    return bad(format!("n_nnz must lie in 1..={}", self.p));
                }
            }
            Regime::Group {
                group_size,
                active_groups,
            } => {
                if group_size == 0 {
                    return bad("group_size must be positive".into());
                }
                let n_groups = self.p.div_ceil(group_size);
                if active_groups == 0 || active_groups > n_groups {
                    return bad(format!("active_groups must lie in 1..={n_groups}"));
                }
            }
            Regime::Graph {
                rows,
                cols,
                edge_support,
            } => {
                if rows * cols != self.p {
                    return bad(format!("grid {rows}x{cols} does not have p = {} nodes", self.p));
                }
                let m = rows * (cols.saturating_sub(1)) + cols * (rows.saturating_sub(1));
                if edge_support == 0 || edge_support > m {
                    return bad(format!("edge_support must lie in 1..={m}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub sigma_x: SymMatrix,
    pub sigma_y: SymMatrix,
    pub sigma_xy: Mat,
    pub u_star: Mat,
    pub v_star: Mat,
    pub lambda_star: Vec<f64>,
    /// Realized number of nonzero rows of `Gamma U*` (graph regime only).
    pub edge_support: Option<usize>,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.sigma_x.dim()
    }

    pub fn q(&self) -> usize {
        self.sigma_y.dim()
    }

    /// `[[Sigma_X, Sigma_XY], [Sigma_YX, Sigma_Y]]`.
    pub fn joint_covariance(&self) -> Mat {
        let (p, q) = (self.p(), self.q());
        let mut joint = Mat::zeros(p + q, p + q);
        joint.view_mut((0, 0), (p, p)).copy_from(self.sigma_x.as_mat());
        joint.view_mut((p, p), (q, q)).copy_from(self.sigma_y.as_mat());
        joint.view_mut((0, p), (p, q)).copy_from(&self.sigma_xy);
        joint.view_mut((p, 0), (q, p)).copy_from(&self.sigma_xy.transpose());
        joint
    }

    /// Rows of `U*` that are not exactly zero.
    pub fn support(&self) -> Vec<usize> {
        (0..self.p()).filter(|&i| self.u_star.row(i).norm() > 0.0).collect()
    }
}

/// `blockdiag(A A', I_{d - d1}) + eps I` with `A` a random `d1 x rank`
/// matrix with orthonormal columns.
fn block_covariance(d: usize, d1: usize, rank: usize, eps: f64, rng: &mut ChaCha8Rng) -> SymMatrix {
    let g = Mat::from_fn(d1, rank, |_, _| rng.sample(StandardNormal));
    let a = g.qr().q();
    let mut s = Mat::identity(d, d) * (1.0 + eps);
    let block = &a * a.transpose() + Mat::identity(d1, d1) * eps;
    s.view_mut((0, 0), (d1, d1)).copy_from(&block);
    SymMatrix::symmetrize(s).expect("square by construction")
}

/// `m (m' S m)^{-1/2}`, or `None` when the Gram matrix is singular.
fn normalize(m: &Mat, sigma: &SymMatrix) -> Option<Mat> {
    let gram = SymMatrix::symmetrize(m.transpose() * sigma.as_mat() * m).ok()?;
    let (inv, rank) = sym_inv_sqrt_with_rank(&gram, GRAM_RANK_TOL).ok()?;
    (rank == m.ncols()).then(|| m * inv.as_mat())
}

/// Uniform(-1, 1) entries on `nnz` random rows of a `rows x cols` matrix.
fn sparse_uniform(rows: usize, cols: usize, nnz: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut support = sample(rng, rows, nnz).into_vec();
    support.sort_unstable();
    uniform_on_rows(rows, cols, &support, rng)
}

fn uniform_on_rows(rows: usize, cols: usize, support: &[usize], rng: &mut ChaCha8Rng) -> Mat {
    let unif = Uniform::new(-1.0, 1.0).expect("valid range");
    let mut m = Mat::zeros(rows, cols);
    for &i in support {
        for j in 0..cols {
            m[(i, j)] = unif.sample(rng);
        }
    }
    m
}

/// Draws until `draw` yields a matrix with a nonsingular Gram matrix.
fn draw_normalized(
    sigma: &SymMatrix,
    rng: &mut ChaCha8Rng,
    what: &str,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Mat,
) -> Result<Mat> {
    for _ in 0..MAX_RETRIES {
        if let Some(m) = normalize(&draw(rng), sigma) {
            return Ok(m);
        }
    }
    Err(Error::GenerationFailed(format!(
        "{what}: Gram matrix singular after {MAX_RETRIES} draws"
    )))
}

/// `Sigma_XY = Sigma_X U Lambda V' Sigma_Y` and the joint PSD check.
fn assemble(
    sigma_x: SymMatrix,
    sigma_y: SymMatrix,
    u_star: Mat,
    v_star: Mat,
    lambda_star: Vec<f64>,
) -> Result<GroundTruth> {
    let lam = Mat::from_diagonal(&DVector::from_vec(lambda_star.clone()));
    let sigma_xy = sigma_x.as_mat() * &u_star * lam * v_star.transpose() * sigma_y.as_mat();
    let gt = GroundTruth {
        sigma_x,
        sigma_y,
        sigma_xy,
        u_star,
        v_star,
        lambda_star,
        edge_support: None,
    };
    let min_eig = sym_eigen(&gt.joint_covariance()).values.min();
    if min_eig < -JOINT_PSD_TOL {
        return Err(Error::GenerationFailed(format!(
            "joint covariance has eigenvalue {min_eig:.3e}"
        )));
    }
    Ok(gt)
}

fn covariances(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> (SymMatrix, SymMatrix) {
    let sigma_x = block_covariance(cfg.p, cfg.p1, cfg.r_pca, cfg.ridge_eps, rng);
    let q1 = cfg.p1.min(cfg.q);
    let sigma_y = block_covariance(cfg.q, q1, cfg.r_pca.min(q1), cfg.ridge_eps, rng);
    (sigma_x, sigma_y)
}

/// Shared recipe: covariances, `U*` from `draw_u`, dense `V*`, assembly.
/// A non-PSD joint matrix triggers a fresh draw of the directions.
fn generate_with(
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    mut draw_u: impl FnMut(&mut ChaCha8Rng) -> Mat,
) -> Result<GroundTruth> {
    cfg.validate()?;
    let (sigma_x, sigma_y) = covariances(cfg, rng);
    let lambdas = signal_lambdas(cfg.signal, cfg.r);
    // V* carries no structure, so it is drawn inside range(Sigma_Y): parts in
    // the null space never reach the data and could not be estimated.
    let (pinv_y, rank_y) = sym_pseudo_inverse(&sigma_y, GRAM_RANK_TOL);
    let range_y = (rank_y < cfg.q).then(|| pinv_y.as_mat() * sigma_y.as_mat());
    let all_rows: Vec<usize> = (0..cfg.q).collect();
    let mut last = None;
    for _ in 0..MAX_RETRIES {
        let u = draw_normalized(&sigma_x, rng, "U*", &mut draw_u)?;
        let v = draw_normalized(&sigma_y, rng, "V*", |rng| {
            let raw = uniform_on_rows(cfg.q, cfg.r, &all_rows, rng);
            match &range_y {
                Some(proj) => proj * raw,
                None => raw,
            }
        })?;
        match assemble(sigma_x.clone(), sigma_y.clone(), u, v, lambdas.clone()) {
            Ok(gt) => return Ok(gt),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::GenerationFailed("no draw attempted".into())))
}

pub fn gen_sparse_model(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<GroundTruth> {
    let Regime::Sparse { n_nnz } = cfg.regime else {
        return Err(Error::InvalidInput("expected the sparse regime".into()));
    };
    generate_with(cfg, rng, |rng| sparse_uniform(cfg.p, cfg.r, n_nnz, rng))
}

pub fn gen_group_model(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<GroundTruth> {
    let Regime::Group {
        group_size,
        active_groups,
    } = cfg.regime
    else {
        return Err(Error::InvalidInput("expected the group regime".into()));
    };
    let n_groups = cfg.p.div_ceil(group_size);
    generate_with(cfg, rng, |rng| {
        let mut chosen = sample(rng, n_groups, active_groups).into_vec();
        chosen.sort_unstable();
        let support: Vec<usize> = chosen
            .iter()
            .flat_map(|&g| g * group_size..((g + 1) * group_size).min(cfg.p))
            .collect();
        uniform_on_rows(cfg.p, cfg.r, &support, rng)
    })
}

pub fn gen_graph_model(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<GroundTruth> {
    let Regime::Graph {
        rows,
        cols,
        edge_support,
    } = cfg.regime
    else {
        return Err(Error::InvalidInput("expected the graph regime".into()));
    };
    cfg.validate()?;
    let graph = grid_graph(rows, cols)?;
    let pinv = graph.incidence_pinv().clone();
    let m = graph.n_edges();
    let mut gt = generate_with(cfg, rng, |rng| &pinv * sparse_uniform(m, cfg.r, edge_support, rng))?;
    let diff = graph.incidence() * &gt.u_star;
    let scale = diff.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let realized = (0..m)
        .filter(|&e| diff.row(e).norm() > 1e-10 * scale.max(f64::MIN_POSITIVE))
        .count();
    gt.edge_support = Some(realized);
    Ok(gt)
}

/// Dispatches on the regime with a generator seeded from `cfg.seed`.
pub fn generate(cfg: &SimConfig) -> Result<GroundTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    generate_from(cfg, &mut rng)
}

pub fn generate_from(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<GroundTruth> {
    match cfg.regime {
        Regime::Sparse { .. } => gen_sparse_model(cfg, rng),
        Regime::Group { .. } => gen_group_model(cfg, rng),
        Regime::Graph { .. } => gen_graph_model(cfg, rng),
    }
}

/// Draws rows `z S` with `S` the symmetric square root of a joint covariance.
#[derive(Clone, Debug)]
pub struct JointSampler {
    p: usize,
    root: Mat,
}

impl JointSampler {
    pub fn new(gt: &GroundTruth) -> Result<Self> {
        let joint = SymMatrix::symmetrize(gt.joint_covariance())?;
        Ok(Self {
            p: gt.p(),
            root: sym_sqrt(&joint, DEFAULT_PSD_TOL)?.into_mat(),
        })
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> (Mat, Mat) {
        let d = self.root.nrows();
        let z = Mat::from_fn(n, d, |_, _| rng.sample(StandardNormal));
        let rows = z * &self.root;
        let x = rows.columns(0, self.p).into_owned();
        let y = rows.columns(self.p, d - self.p).into_owned();
        (x, y)
    }
}

pub fn sample_joint(gt: &GroundTruth, n: usize, rng: &mut impl Rng) -> Result<(Mat, Mat)> {
    Ok(JointSampler::new(gt)?.sample(n, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::operator_norm;

    fn max_abs(m: &Mat) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn check_invariants(gt: &GroundTruth) {
        let r = gt.u_star.ncols();
        let gu = gt.u_star.transpose() * gt.sigma_x.as_mat() * &gt.u_star;
        let gv = gt.v_star.transpose() * gt.sigma_y.as_mat() * &gt.v_star;
        assert!(max_abs(&(gu - Mat::identity(r, r))) < 1e-8);
        assert!(max_abs(&(gv - Mat::identity(r, r))) < 1e-8);
        let lam = Mat::from_diagonal(&DVector::from_vec(gt.lambda_star.clone()));
        let rebuilt = gt.sigma_x.as_mat() * &gt.u_star * lam * gt.v_star.transpose() * gt.sigma_y.as_mat();
        assert!(max_abs(&(rebuilt - &gt.sigma_xy)) < 1e-10);
        assert!(sym_eigen(&gt.joint_covariance()).values.min() >= -1e-8);
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(signal_lambdas(Signal::High, 2), vec![0.9, 0.75]);
        assert!((signal_lambdas(Signal::Low, 1)[0] - 0.425).abs() < 1e-15);
        let m = signal_lambdas(Signal::Medium, 4);
        for (a, b) in m.iter().zip([0.70, 0.65, 0.60, 0.55]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_model_has_requested_support() {
        for seed in 0..5 {
            let cfg = SimConfig::sparse(500, 100, 30, 3, Signal::High, seed);
            let gt = generate(&cfg).unwrap();
            check_invariants(&gt);
            assert_eq!(gt.support().len(), 10);
        }
    }

    #[test]
    fn group_model_support_is_five_blocks() {
        let cfg = SimConfig::group(500, 100, 30, 3, Signal::High, 3);
        let gt = generate(&cfg).unwrap();
        check_invariants(&gt);
        let s = gt.support();
        assert_eq!(s.len(), 50);
        for block in s.chunks(10) {
            assert_eq!(block[0] % 10, 0);
            assert_eq!(block[9], block[0] + 9);
        }
    }

    #[test]
    fn single_full_group_is_dense() {
        let mut cfg = SimConfig::group(100, 30, 5, 2, Signal::Low, 1);
        cfg.regime = Regime::Group {
            group_size: 30,
            active_groups: 1,
        };
        let gt = generate(&cfg).unwrap();
        assert_eq!(gt.support().len(), 30);
    }

    #[test]
    fn graph_model_is_orthogonal_to_constants() {
        let cfg = SimConfig::graph(200, 10, 10, 10, 2, Signal::High, 5);
        let gt = generate(&cfg).unwrap();
        check_invariants(&gt);
        let col_sums = gt.u_star.row_sum();
        assert!(col_sums.iter().all(|s| s.abs() < 1e-10));
        let realized = gt.edge_support.unwrap();
        assert!(realized > 0 && realized <= 180);
    }

    #[test]
    fn two_by_two_graph_single_edge() {
        let g = grid_graph(2, 2).unwrap();
        let mut ut = Mat::zeros(4, 1);
        ut[(1, 0)] = 1.0;
        let u = g.incidence_pinv() * ut;
        assert!(max_abs(&(g.projector().as_mat() * &u)) < 1e-12);
        let mut vals: Vec<f64> = u.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert!(vals.len() <= 4);
    }

    #[test]
    fn identity_sampler_covariance() {
        let gt = GroundTruth {
            sigma_x: SymMatrix::identity(2),
            sigma_y: SymMatrix::identity(2),
            sigma_xy: Mat::zeros(2, 2),
            u_star: Mat::identity(2, 1),
            v_star: Mat::identity(2, 1),
            lambda_star: vec![0.0],
            edge_support: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, y) = sample_joint(&gt, 100_000, &mut rng).unwrap();
        let joint = crate::linalg::vstack(&x.transpose(), &y.transpose());
        let cov = &joint * joint.transpose() / 100_000.0;
        assert!(operator_norm(&(cov - Mat::identity(4, 4))) < 0.05);
    }

    #[test]
    fn degenerate_sampler_stays_on_line() {
        let a = Mat::from_column_slice(2, 1, &[1.0, 2.0]);
        let gt = GroundTruth {
            sigma_x: SymMatrix::symmetrize(&a * a.transpose()).unwrap(),
            sigma_y: SymMatrix::from_diagonal(&[0.0]),
            sigma_xy: Mat::zeros(2, 1),
            u_star: Mat::zeros(2, 1),
            v_star: Mat::zeros(1, 1),
            lambda_star: vec![0.0],
            edge_support: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (x, _) = sample_joint(&gt, 100, &mut rng).unwrap();
        for i in 0..100 {
            assert!((x[(i, 1)] - 2.0 * x[(i, 0)]).abs() < 1e-8);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SimConfig::sparse(50, 40, 10, 2, Signal::Medium, 77);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_joint(&a, 20, &mut r1).unwrap(), sample_joint(&b, 20, &mut r2).unwrap());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = SimConfig::sparse(50, 40, 10, 2, Signal::Medium, 0);
        cfg.r = 11;
        assert!(generate(&cfg).is_err());
        let mut cfg = SimConfig::graph(50, 3, 3, 4, 1, Signal::High, 0);
        cfg.p = 10;
        assert!(matches!(generate(&cfg), Err(Error::InvalidInput(_))));
    }
}
