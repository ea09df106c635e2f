//! The four subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ccar3::bench::{benchmark_run, summarize, BenchSpec};
use ccar3::cca::{cca_gep_oracle, CcaFitter};
use ccar3::cv::{kfold_cv, CvOptions};
use ccar3::linalg::{center_columns, sample_covariance, Centering};
use ccar3::synth::{generate, JointSampler};
use ccar3::{
    AdmmConfig, CcaModel, Error, Execution, FitOptions, GraphStructure, Mat, Partition, Penalty, Regime, SimConfig,
    SolveTrace, SymMatrix, URecovery,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{BenchArgs, CvArgs, FitArgs, MethodArg, RegimeKind, SimulateArgs, URecoveryArg};
use crate::error::CliError;
use crate::io::{ensure_dir, read_edges, read_json_value, read_knn, read_labels, read_matrix, write_json, write_matrix};

pub const SCHEMA_VERSION: u32 = 1;

/// Offset between the generator seed and the sampling stream.
const SAMPLE_STREAM: u64 = 0x5A5A_5A5A_5A5A_5A5A;

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Provenance block. Output locations are left out so that reruns into
/// different directories produce identical files.
fn meta(command: &str, config: &impl Serialize) -> Value {
    json!({
        "tool": "ccar3",
        "version": env!("CARGO_PKG_VERSION"),
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
    })
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

/// Turns validation failures of the resolved configuration into usage errors.
fn usage(err: Error) -> CliError {
    match err {
        Error::InvalidInput(msg) | Error::DimensionMismatch(msg) => CliError::Usage(msg),
        other => CliError::Core(other),
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub out: PathBuf,
    pub files: Vec<String>,
    #[serde(flatten)]
    pub extra: Value,
}

// ---------------------------------------------------------------- simulate

fn sim_config(a: &SimulateArgs) -> Result<SimConfig, CliError> {
    let regime_kind = a.regime.unwrap_or(RegimeKind::Sparse);
    let (regime, p) = match regime_kind {
        RegimeKind::Sparse => (
            Regime::Sparse {
                n_nnz: a.n_nnz.unwrap_or(10),
            },
            a.p.unwrap_or(100),
        ),
        RegimeKind::Group => (
            Regime::Group {
                group_size: a.group_size.unwrap_or(10),
                active_groups: a.active_groups.unwrap_or(5),
            },
            a.p.unwrap_or(100),
        ),
        RegimeKind::Graph => {
            let grid = a.grid.unwrap_or(crate::config::GridShape { rows: 10, cols: 10 });
            let p = grid.rows * grid.cols;
            if let Some(given) = a.p.filter(|&given| given != p) {
                return Err(CliError::Usage(format!("--p {given} disagrees with --grid {grid}")));
            }
            (
                Regime::Graph {
                    rows: grid.rows,
                    cols: grid.cols,
                    edge_support: a.edge_support.unwrap_or(5),
                },
                p,
            )
        }
    };
    let cfg = SimConfig {
        n: a.n.unwrap_or(500),
        p,
        q: a.q.unwrap_or(10),
        r: a.r.unwrap_or(3),
        r_pca: a.r_pca.unwrap_or(5),
        p1: a.p1.unwrap_or(20),
        regime,
        signal: a.signal.map(Into::into).unwrap_or(ccar3::Signal::High),
        seed: a.seed.unwrap_or(0),
        ridge_eps: a.ridge_eps.unwrap_or(0.0),
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn simulate(args: SimulateArgs, config: Option<&PathBuf>) -> Result<Report, CliError> {
    let args = crate::config::resolve(args, config)?;
    let out = required(args.out.clone(), "out")?;
    let cfg = sim_config(&args)?;
    let gt = generate(&cfg)?;
    let sampler = JointSampler::new(&gt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SAMPLE_STREAM);
    let (x, y) = sampler.sample(cfg.n, &mut rng);

    ensure_dir(&out)?;
    write_matrix(&out.join("X.csv"), &x)?;
    write_matrix(&out.join("Y.csv"), &y)?;
    write_matrix(&out.join("U_star.csv"), &gt.u_star)?;
    write_matrix(&out.join("V_star.csv"), &gt.v_star)?;
    let truth = json!({
        "regime": cfg.regime.name(),
        "lambda_star": gt.lambda_star,
        "support": gt.support(),
        "edge_support": gt.edge_support,
        "u_star": rows(&gt.u_star),
        "v_star": rows(&gt.v_star),
        "sigma_x": rows(gt.sigma_x.as_mat()),
        "sigma_y": rows(gt.sigma_y.as_mat()),
        "sigma_xy": rows(&gt.sigma_xy),
    });
    write_json(&out.join("ground_truth.json"), &truth)?;
    let mut m = meta("simulate", &cfg);
    m["seed"] = json!(cfg.seed);
    write_json(&out.join("meta.json"), &m)?;
    log::info!("wrote n = {} draws with p = {}, q = {} to {}", cfg.n, cfg.p, cfg.q, out.display());
    Ok(Report {
        command: "simulate",
        out,
        files: ["X.csv", "Y.csv", "U_star.csv", "V_star.csv", "ground_truth.json", "meta.json"]
            .map(String::from)
            .to_vec(),
        extra: json!({ "support": gt.support(), "edge_support": gt.edge_support }),
    })
}

// ---------------------------------------------------------------- fit

/// Data and options shared by `fit` and `cv`.
struct Problem {
    x: Mat,
    y: Mat,
    method: MethodArg,
    opts: FitOptions,
    centered: bool,
}

fn load_problem(a: &FitArgs) -> Result<Problem, CliError> {
    let method = required(a.method, "method")?;
    let x_path = required(a.x.as_ref(), "x")?;
    let y_path = required(a.y.as_ref(), "y")?;
    let mut x = read_matrix(x_path)?;
    let mut y = read_matrix(y_path)?;
    if x.nrows() != y.nrows() {
        return Err(CliError::Input(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let centered = a.center.unwrap_or(true);
    if centered {
        x = center_columns(&x).0;
        y = center_columns(&y).0;
    }
    let p = x.ncols();
    let rho = a.rho.unwrap_or(0.0);
    let penalty = match method {
        MethodArg::Rrr | MethodArg::Gep => Penalty::None,
        MethodArg::Pinv => Penalty::MinNorm,
        MethodArg::Sparse => Penalty::Sparse { rho },
        MethodArg::Group => Penalty::Group {
            partition: Arc::new(partition(a, p)?),
            rho,
        },
        MethodArg::Graph => Penalty::Graph {
            graph: Arc::new(graph(a, p)?),
            rho,
        },
        MethodArg::Ridge => Penalty::Ridge {
            kernel: Arc::new(kernel(a, p)?),
            rho,
        },
    };
    let defaults = AdmmConfig::default();
    let admm = AdmmConfig {
        delta: a.delta.unwrap_or(defaults.delta),
        eps: a.eps.unwrap_or(defaults.eps),
        max_iter: a.max_iter.unwrap_or(defaults.max_iter),
        ..defaults
    };
    admm.validate().map_err(usage)?;
    let opts = FitOptions {
        rank: a.r.unwrap_or(1),
        penalty,
        shrink_sigma_y: a.shrink_sigma_y.unwrap_or(true),
        u_recovery: match a.u_recovery.unwrap_or(URecoveryArg::ViaB) {
            URecoveryArg::ViaB => URecovery::ViaB,
            URecoveryArg::ViaSqrt => URecovery::ViaSqrt,
        },
        admm,
    };
    Ok(Problem {
        x,
        y,
        method,
        opts,
        centered,
    })
}

fn partition(a: &FitArgs, p: usize) -> Result<Partition, CliError> {
    if let Some(path) = &a.groups {
        let labels = read_labels(path)?;
        if labels.len() != p {
            return Err(CliError::Input(format!(
                "{} has {} labels, X has {p} columns",
                path.display(),
                labels.len()
            )));
        }
        let mut distinct: Vec<i64> = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let groups = distinct
            .iter()
            .map(|l| (0..p).filter(|&i| labels[i] == *l).collect())
            .collect();
        return Ok(Partition::new(p, groups)?);
    }
    let size = a
        .group_size
        .ok_or_else(|| CliError::Usage("the group method needs --group-size or --groups".into()))?;
    Partition::contiguous(p, size).map_err(usage)
}

fn graph(a: &FitArgs, p: usize) -> Result<GraphStructure, CliError> {
    match (&a.edges, &a.coords, a.knn) {
        (Some(path), None, _) => read_edges(path, p),
        (None, Some(path), Some(k)) => read_knn(path, k, p),
        (None, Some(_), None) => Err(CliError::Usage("--coords needs --knn".into())),
        (Some(_), Some(_), _) => Err(CliError::Usage("give either --edges or --coords, not both".into())),
        (None, None, _) => Err(CliError::Usage("the graph method needs --edges or --coords".into())),
    }
}

fn kernel(a: &FitArgs, p: usize) -> Result<SymMatrix, CliError> {
    match &a.kernel {
        None => Ok(SymMatrix::identity(p)),
        Some(path) => {
            let k = read_matrix(path)?;
            if k.nrows() != p || k.ncols() != p {
                return Err(CliError::Input(format!(
                    "{} is {}x{}, expected {p}x{p}",
                    path.display(),
                    k.nrows(),
                    k.ncols()
                )));
            }
            Ok(SymMatrix::new(k)?)
        }
    }
}

/// `model.json` body: the fit plus Gram diagnostics on the fitted data.
fn model_json(model: &CcaModel, x: &Mat, y: &Mat) -> Result<Value, CliError> {
    let mut diagnostics = Value::Null;
    if model.rank() > 0 {
        let sy = sample_covariance(y, Centering::None)?;
        let ugram = model.u_gram(x);
        let vgram = model.v.transpose() * sy.as_mat() * &model.v;
        let eye = Mat::identity(model.rank(), model.rank());
        diagnostics = json!({
            "u_gram": rows(&ugram),
            "v_gram": rows(&vgram),
            "u_gram_max_deviation": (&ugram - &eye).amax(),
            "v_gram_max_deviation": (&vgram - &eye).amax(),
        });
    }
    Ok(json!({
        "method": model.method.name(),
        "rho": model.rho,
        "requested_rank": model.requested_rank,
        "rank": model.rank(),
        "correlations": model.correlations,
        "u": rows(&model.u),
        "v": rows(&model.v),
        "support": model.support,
        "warnings": model.warnings,
        "gram": diagnostics,
    }))
}

fn fit_once(prob: &Problem) -> Result<(CcaModel, Option<SolveTrace>), CliError> {
    if prob.method == MethodArg::Gep {
        return Ok((cca_gep_oracle(&prob.x, &prob.y, prob.opts.rank)?, None));
    }
    let rho = prob.opts.penalty.rho();
    let fitted = CcaFitter::new(&prob.x, &prob.y, &prob.opts)?.fit(rho, None)?;
    if prob.method.is_penalized() && fitted.model.rank() == 0 {
        return Err(Error::EmptyModel { rho }.into());
    }
    Ok((fitted.model, fitted.trace))
}

pub fn fit(args: FitArgs, config: Option<&PathBuf>) -> Result<Report, CliError> {
    let args = crate::config::resolve(args, config)?;
    let out = required(args.out.clone(), "out")?;
    let prob = load_problem(&args)?;
    if prob.method.is_penalized() && args.rho.is_none() {
        return Err(CliError::Usage(format!(
            "--rho is required for the {} method",
            format!("{:?}", prob.method).to_lowercase()
        )));
    }
    let (model, trace) = fit_once(&prob)?;
    for w in &model.warnings {
        log::warn!("{w}");
    }
    ensure_dir(&out)?;
    let mut body = model_json(&model, &prob.x, &prob.y)?;
    body["centered"] = json!(prob.centered);
    body["meta"] = meta("fit", &FitArgs { out: None, ..args.clone() });
    write_json(&out.join("model.json"), &body)?;
    write_json(&out.join("trace.json"), &json!({ "trace": trace }))?;
    Ok(Report {
        command: "fit",
        out,
        files: vec!["model.json".into(), "trace.json".into()],
        extra: json!({
            "correlations": model.correlations,
            "converged": trace.as_ref().map(|t| t.converged),
        }),
    })
}

// ---------------------------------------------------------------- cv

pub fn cv(args: CvArgs, config: Option<&PathBuf>, execution: Execution) -> Result<Report, CliError> {
    let args = crate::config::resolve(args, config)?;
    let out = required(args.fit.out.clone(), "out")?;
    let provenance = meta(
        "cv",
        &CvArgs {
            fit: FitArgs { out: None, ..args.fit.clone() },
            ..args.clone()
        },
    );
    let prob = load_problem(&args.fit)?;
    if prob.method == MethodArg::Gep {
        return Err(CliError::Usage("cross-validation does not apply to the gep method".into()));
    }
    let defaults = CvOptions::default();
    let opts = CvOptions {
        folds: args.folds.unwrap_or(defaults.folds),
        seed: args.seed.unwrap_or(defaults.seed),
        grid: args.grid.clone(),
        grid_size: args.grid_size.unwrap_or(defaults.grid_size),
        grid_min_ratio: args.grid_min_ratio.unwrap_or(defaults.grid_min_ratio),
        execution,
    };
    if opts.folds < 2 {
        return Err(CliError::Usage(format!("--folds must be at least 2, got {}", opts.folds)));
    }
    let report = kfold_cv(&prob.x, &prob.y, &prob.opts, &opts).map_err(|e| match e {
        Error::InvalidInput(msg) => CliError::Usage(msg),
        other => CliError::Core(other),
    })?;
    ensure_dir(&out)?;
    let cv_json = json!({
        "grid": report.grid,
        "fold_scores": report.fold_scores,
        "mean_scores": report.mean_scores,
        "selected_index": report.selected_index,
        "selected_rho": report.selected_rho,
        "folds": opts.folds,
        "seed": opts.seed,
        "meta": provenance,
    });
    write_json(&out.join("cv_report.json"), &cv_json)?;
    let model = &report.refit;
    let mut files = vec!["cv_report.json".to_string()];
    if prob.method.is_penalized() && model.rank() == 0 {
        return Err(Error::EmptyModel {
            rho: report.selected_rho,
        }
        .into());
    }
    let mut body = model_json(model, &prob.x, &prob.y)?;
    body["centered"] = json!(prob.centered);
    body["meta"] = provenance;
    write_json(&out.join("model.json"), &body)?;
    files.push("model.json".into());
    Ok(Report {
        command: "cv",
        out,
        files,
        extra: json!({ "selected_rho": report.selected_rho, "correlations": model.correlations }),
    })
}

// ---------------------------------------------------------------- benchmark

fn bench_spec(path: &Path, o: &BenchArgs) -> Result<BenchSpec, CliError> {
    let value = read_json_value(path)?;
    let mut spec: BenchSpec =
        serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(v) = o.replicates {
        spec.replicates = v;
    }
    if let Some(v) = o.seed {
        spec.seed = v;
    }
    if let Some(v) = o.folds {
        spec.folds = v;
    }
    if let Some(v) = o.grid_size {
        spec.grid_size = v;
    }
    if let Some(v) = o.grid_min_ratio {
        spec.grid_min_ratio = v;
    }
    if o.validation_n.is_some() {
        spec.validation_n = o.validation_n;
    }
    spec.validate().map_err(usage)?;
    Ok(spec)
}

pub fn benchmark(spec_path: &Path, out: &Path, overrides: &BenchArgs, execution: Execution) -> Result<Report, CliError> {
    let spec = bench_spec(spec_path, overrides)?;
    let output = benchmark_run(&spec, execution)?;
    ensure_dir(out)?;
    let csv_path = out.join("results.csv");
    let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    for row in &output.rows {
        writer.serialize(row).map_err(|e| CliError::io(&csv_path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(&csv_path, e))?;
    let summary = summarize(&output.rows);
    let results = json!({
        "schema_version": SCHEMA_VERSION,
        "spec": spec,
        "rows": output.rows,
        "summary": summary,
    });
    write_json(&out.join("results.json"), &results)?;
    write_json(&out.join("timings.json"), &json!({ "timings": output.timings }))?;
    let ok = output.rows.iter().filter(|r| r.ok).count();
    log::info!("{ok} of {} benchmark rows succeeded", output.rows.len());
    if ok == 0 {
        return Err(CliError::Other("every benchmark row failed".into()));
    }
    Ok(Report {
        command: "benchmark",
        out: out.to_path_buf(),
        files: ["results.csv", "results.json", "timings.json"].map(String::from).to_vec(),
        extra: json!({ "rows": output.rows.len(), "succeeded": ok }),
    })
}
