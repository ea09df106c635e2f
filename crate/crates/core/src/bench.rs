//! Monte Carlo runner: regimes x methods x replicates.
//!
//! Replicate `j` of regime `i` draws its data from a seed derived from
//! `(seed, i, j)` only, so every method sees the same samples and results do
//! not depend on how work is scheduled.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmConfig, Partition};
use crate::cca::{cca_gep_oracle, CcaModel, FitOptions, Penalty, URecovery};
use crate::cv::{kfold_cv, CvOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::{grid_graph, GraphStructure};
use crate::linalg::{Mat, SymMatrix};
use crate::metrics::{stacked_direction_distance, subspace_distance, support_metrics, validation_correlation};
use crate::synth::{generate, GroundTruth, JointSampler, Regime, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Rrr,
    Pinv,
    Gep,
    Sparse,
    Group,
    Graph,
    Ridge,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Rrr => "rrr",
            MethodKind::Pinv => "pinv",
            MethodKind::Gep => "gep",
            MethodKind::Sparse => "sparse",
            MethodKind::Group => "group",
            MethodKind::Graph => "graph",
            MethodKind::Ridge => "ridge",
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// Label in the output; defaults to the kind's name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_true")]
    pub shrink_sigma_y: bool,
    /// Group size for the group penalty when the regime does not fix one.
    #[serde(default)]
    pub group_size: Option<usize>,
    #[serde(default)]
    pub u_recovery: URecovery,
    #[serde(default)]
    pub admm: AdmmConfig,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            kind,
            label: None,
            shrink_sigma_y: true,
            group_size: None,
            u_recovery: URecovery::ViaB,
            admm: AdmmConfig::default(),
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub regimes: Vec<SimConfig>,
    pub methods: Vec<MethodSpec>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_grid_min_ratio")]
    pub grid_min_ratio: f64,
    /// Validation sample size; defaults to the regime's `n`.
    #[serde(default)]
    pub validation_n: Option<usize>,
}

fn default_folds() -> usize {
    5
}

fn default_grid_size() -> usize {
    10
}

fn default_grid_min_ratio() -> f64 {
    1e-3
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidInput("need at least one regime and one method".into()));
        }
        for cfg in &self.regimes {
            cfg.validate()?;
        }
        for m in &self.methods {
            m.admm.validate()?;
        }
        Ok(())
    }
}

/// One (regime, method, replicate) outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub regime_index: usize,
    pub regime: String,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub signal: String,
    pub method: String,
    pub replicate: usize,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub selected_rho: Option<f64>,
    pub effective_rank: Option<usize>,
    pub distance: Option<f64>,
    pub u_distance: Option<f64>,
    pub v_distance: Option<f64>,
    pub validation_correlation: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub est_support_size: Option<usize>,
    pub true_support_size: usize,
    /// `||Gamma U||_21` of the estimate (graph regime only).
    pub graph_tv: Option<f64>,
    /// Realized number of nonzero rows of `Gamma U*` (graph regime only).
    pub true_edge_support: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub regime_index: usize,
    pub method: String,
    pub replicate: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BenchOutput {
    /// Sorted by (regime, method label, replicate).
    pub rows: Vec<BenchRow>,
    pub timings: Vec<Timing>,
}

/// Seed for replicate `rep` of regime `regime`.
pub fn replicate_seed(seed: u64, regime: usize, rep: usize) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ regime as u64) ^ rep as u64)
}

struct Replicate {
    cfg: SimConfig,
    gt: GroundTruth,
    graph: Option<Arc<GraphStructure>>,
    x: Mat,
    y: Mat,
    x_val: Mat,
    y_val: Mat,
}

fn draw_replicate(cfg: &SimConfig, seed: u64, validation_n: usize) -> Result<Replicate> {
    let cfg = SimConfig { seed, ..cfg.clone() };
    let gt = generate(&cfg)?;
    let sampler = JointSampler::new(&gt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A_5A5A_5A5A_5A5A);
    let (x, y) = sampler.sample(cfg.n, &mut rng);
    let (x_val, y_val) = sampler.sample(validation_n, &mut rng);
    let graph = match cfg.regime {
        Regime::Graph { rows, cols, .. } => Some(Arc::new(grid_graph(rows, cols)?)),
        _ => None,
    };
    Ok(Replicate {
        cfg,
        gt,
        graph,
        x,
        y,
        x_val,
        y_val,
    })
}

fn fit_options(method: &MethodSpec, rep: &Replicate) -> Result<FitOptions> {
    let p = rep.cfg.p;
    let penalty = match method.kind {
        MethodKind::Rrr | MethodKind::Gep => Penalty::None,
        MethodKind::Pinv => Penalty::MinNorm,
        MethodKind::Sparse => Penalty::Sparse { rho: 0.0 },
        MethodKind::Group => {
            let size = match (&rep.cfg.regime, method.group_size) {
                (_, Some(s)) => s,
                (Regime::Group { group_size, .. }, None) => *group_size,
                _ => 10,
            };
            Penalty::Group {
                partition: Arc::new(Partition::contiguous(p, size)?),
                rho: 0.0,
            }
        }
        MethodKind::Graph => Penalty::Graph {
            graph: rep
                .graph
                .clone()
                .ok_or_else(|| Error::InvalidInput("graph method needs a graph regime".into()))?,
            rho: 0.0,
        },
        MethodKind::Ridge => Penalty::Ridge {
            kernel: Arc::new(SymMatrix::identity(p)),
            rho: 0.0,
        },
    };
    Ok(FitOptions {
        rank: rep.cfg.r,
        penalty,
        shrink_sigma_y: method.shrink_sigma_y,
        u_recovery: method.u_recovery,
        admm: method.admm,
    })
}

fn fit_method(method: &MethodSpec, rep: &Replicate, spec: &BenchSpec, seed: u64) -> Result<(CcaModel, Option<f64>)> {
    if method.kind == MethodKind::Gep {
        return Ok((cca_gep_oracle(&rep.x, &rep.y, rep.cfg.r)?, None));
    }
    let opts = fit_options(method, rep)?;
    let cv = CvOptions {
        folds: spec.folds,
        seed,
        grid: None,
        grid_size: spec.grid_size,
        grid_min_ratio: spec.grid_min_ratio,
        execution: Execution::Sequential,
    };
    let report = kfold_cv(&rep.x, &rep.y, &opts, &cv)?;
    let rho = opts.penalty.is_tunable().then_some(report.selected_rho);
    Ok((report.refit, rho))
}

fn base_row(rep: &Replicate, regime_index: usize, method: &MethodSpec, replicate: usize) -> BenchRow {
    BenchRow {
        regime_index,
        regime: rep.cfg.regime.name().to_string(),
        n: rep.cfg.n,
        p: rep.cfg.p,
        q: rep.cfg.q,
        r: rep.cfg.r,
        signal: format!("{:?}", rep.cfg.signal).to_lowercase(),
        method: method.label(),
        replicate,
        seed: rep.cfg.seed,
        ok: false,
        error: None,
        selected_rho: None,
        effective_rank: None,
        distance: None,
        u_distance: None,
        v_distance: None,
        validation_correlation: None,
        fpr: None,
        fnr: None,
        est_support_size: None,
        true_support_size: rep.gt.support().len(),
        graph_tv: None,
        true_edge_support: rep.gt.edge_support,
    }
}

fn score(row: &mut BenchRow, model: &CcaModel, rep: &Replicate) -> Result<()> {
    let gt = &rep.gt;
    let max = (gt.u_star.ncols() as f64).sqrt();
    row.effective_rank = Some(model.rank());
    row.distance = Some(stacked_direction_distance(model, gt)?);
    if model.rank() > 0 {
        row.u_distance = Some(subspace_distance(&model.u, &gt.u_star)?);
        row.v_distance = Some(subspace_distance(&model.v, &gt.v_star)?);
    } else {
        row.u_distance = Some(max);
        row.v_distance = Some(max);
    }
    row.validation_correlation = Some(validation_correlation(model, &rep.x_val, &rep.y_val)?);
    let support = support_metrics(&model.u, &gt.u_star, 0.0)?;
    row.fpr = Some(support.fpr);
    row.fnr = Some(support.fnr);
    row.est_support_size = Some(support.est_support_size);
    if let Some(g) = &rep.graph {
        row.graph_tv = Some(g.tv_norm(&model.u));
    }
    Ok(())
}

fn run_replicate(spec: &BenchSpec, regime_index: usize, replicate: usize) -> (Vec<BenchRow>, Vec<Timing>) {
    let cfg = &spec.regimes[regime_index];
    let seed = replicate_seed(spec.seed, regime_index, replicate);
    let validation_n = spec.validation_n.unwrap_or(cfg.n);
    let rep = match draw_replicate(cfg, seed, validation_n) {
        Ok(rep) => rep,
        Err(e) => {
            let rows = spec
                .methods
                .iter()
                .map(|m| failed_row(cfg, regime_index, m, replicate, seed, &e))
                .collect();
            return (rows, Vec::new());
        }
    };
    let mut rows = Vec::with_capacity(spec.methods.len());
    let mut timings = Vec::with_capacity(spec.methods.len());
    for method in &spec.methods {
        let start = Instant::now();
        let mut row = base_row(&rep, regime_index, method, replicate);
        let outcome = fit_method(method, &rep, spec, seed).and_then(|(model, rho)| {
            row.selected_rho = rho;
            score(&mut row, &model, &rep)
        });
        match outcome {
            Ok(()) => row.ok = true,
            Err(e) => {
                log::warn!(
                    "regime {regime_index} replicate {replicate} method {}: {e}",
                    method.label()
                );
                row.error = Some(e.to_string());
            }
        }
        timings.push(Timing {
            regime_index,
            method: method.label(),
            replicate,
            seconds: start.elapsed().as_secs_f64(),
        });
        rows.push(row);
    }
    (rows, timings)
}

fn failed_row(
    cfg: &SimConfig,
    regime_index: usize,
    method: &MethodSpec,
    replicate: usize,
    seed: u64,
    err: &Error,
) -> BenchRow {
    BenchRow {
        regime_index,
        regime: cfg.regime.name().to_string(),
        n: cfg.n,
        p: cfg.p,
        q: cfg.q,
        r: cfg.r,
        signal: format!("{:?}", cfg.signal).to_lowercase(),
        method: method.label(),
        replicate,
        seed,
        ok: false,
        error: Some(err.to_string()),
        selected_rho: None,
        effective_rank: None,
        distance: None,
        u_distance: None,
        v_distance: None,
        validation_correlation: None,
        fpr: None,
        fnr: None,
        est_support_size: None,
        true_support_size: 0,
        graph_tv: None,
        true_edge_support: None,
    }
}

/// Runs every cell. Failures are recorded in the rows; only an invalid
/// spec is an error.
pub fn benchmark_run(spec: &BenchSpec, execution: Execution) -> Result<BenchOutput> {
    spec.validate()?;
    let tasks: Vec<(usize, usize)> = (0..spec.regimes.len())
        .flat_map(|i| (0..spec.replicates).map(move |j| (i, j)))
        .collect();
    let results = execution.map(tasks, |(i, j)| run_replicate(spec, i, j));
    let mut out = BenchOutput::default();
    for (rows, timings) in results {
        out.rows.extend(rows);
        out.timings.extend(timings);
    }
    out.rows.sort_by(|a, b| {
        (a.regime_index, &a.method, a.replicate).cmp(&(b.regime_index, &b.method, b.replicate))
    });
    out.timings.sort_by(|a, b| {
        (a.regime_index, &a.method, a.replicate).cmp(&(b.regime_index, &b.method, b.replicate))
    });
    Ok(out)
}

/// Mean, median and quartiles (linear interpolation between order statistics).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Stat {
    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }

    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Stat {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile(&v, 0.5),
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
        })
    }
}

/// `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub regime_index: usize,
    pub method: String,
    pub replicates: usize,
    pub succeeded: usize,
    pub distance: Option<Stat>,
    pub validation_correlation: Option<Stat>,
    pub fpr: Option<Stat>,
    pub fnr: Option<Stat>,
    pub est_support_size: Option<Stat>,
    pub graph_tv: Option<Stat>,
}

/// Per (regime, method) statistics over the successful replicates.
pub fn summarize(rows: &[BenchRow]) -> Vec<CellSummary> {
    let mut keys: Vec<(usize, String)> = rows.iter().map(|r| (r.regime_index, r.method.clone())).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(regime_index, method)| {
            let cell: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.regime_index == regime_index && r.method == method)
                .collect();
            let ok: Vec<&BenchRow> = cell.iter().copied().filter(|r| r.ok).collect();
            let stat = |f: &dyn Fn(&BenchRow) -> Option<f64>| {
                Stat::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            CellSummary {
                regime_index,
                method,
                replicates: cell.len(),
                succeeded: ok.len(),
                distance: stat(&|r| r.distance),
                validation_correlation: stat(&|r| r.validation_correlation),
                fpr: stat(&|r| r.fpr),
                fnr: stat(&|r| r.fnr),
                est_support_size: stat(&|r| r.est_support_size.map(|s| s as f64)),
                graph_tv: stat(&|r| r.graph_tv),
            }
        })
        .collect()
}
