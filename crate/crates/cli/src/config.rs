//! Flag and config-file parameter records.
//!
//! Every field is optional so that a record parsed from flags can be laid over
//! one read from `--config`; whatever is still unset takes the default.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::read_json_value;

/// Fills every `None` field of `self` from `other`.
pub trait Overlay {
    fn overlay(self, other: Self) -> Self;
}

macro_rules! overlay_fields {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl Overlay for $ty {
            fn overlay(self, other: Self) -> Self {
                Self {
                    $($field: self.$field.or(other.$field),)*
                }
            }
        }
    };
}

/// Reads a config file, rejecting keys the record does not know.
pub fn read_config<T: Serialize + DeserializeOwned + Default>(path: &Path) -> Result<T, CliError> {
    let value = read_json_value(path)?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::Usage(format!("{}: config must be a JSON object", path.display())))?;
    let known: BTreeSet<String> = match serde_json::to_value(T::default()) {
        Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    };
    let unknown: Vec<&String> = obj.keys().filter(|k| !known.contains(*k)).collect();
    if !unknown.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: unknown config keys {unknown:?}",
            path.display()
        )));
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Merges flags over an optional config file.
pub fn resolve<T>(flags: T, config: Option<&PathBuf>) -> Result<T, CliError>
where
    T: Overlay + Serialize + DeserializeOwned + Default,
{
    match config {
        Some(path) => Ok(flags.overlay(read_config(path)?)),
        None => Ok(flags),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RegimeKind {
    Sparse,
    Group,
    Graph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SignalArg {
    High,
    Medium,
    Low,
}

impl From<SignalArg> for ccar3::Signal {
    fn from(s: SignalArg) -> Self {
        match s {
            SignalArg::High => ccar3::Signal::High,
            SignalArg::Medium => ccar3::Signal::Medium,
            SignalArg::Low => ccar3::Signal::Low,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Rrr,
    Pinv,
    Gep,
    Sparse,
    Group,
    Graph,
    Ridge,
}

impl MethodArg {
    pub fn is_penalized(self) -> bool {
        matches!(self, MethodArg::Sparse | MethodArg::Group | MethodArg::Graph | MethodArg::Ridge)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum URecoveryArg {
    ViaB,
    ViaSqrt,
}

/// `RxC` grid shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl std::str::FromStr for GridShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("grid '{s}' is not of the form ROWSxCOLS"))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| format!("grid '{s}' needs positive integers"))
        };
        Ok(GridShape {
            rows: parse(r)?,
            cols: parse(c)?,
        })
    }
}

impl std::fmt::Display for GridShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl Serialize for GridShape {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GridShape {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub regime: Option<RegimeKind>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of covariates; implied by `--grid` in the graph regime.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub r_pca: Option<usize>,
    #[arg(long)]
    pub p1: Option<usize>,
    #[arg(long, value_enum)]
    pub signal: Option<SignalArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Nonzero rows of `U*` (sparse regime).
    #[arg(long)]
    pub n_nnz: Option<usize>,
    /// Group size (group regime).
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Number of nonzero groups (group regime).
    #[arg(long)]
    pub active_groups: Option<usize>,
    /// Grid shape `ROWSxCOLS` (graph regime).
    #[arg(long)]
    pub grid: Option<GridShape>,
    /// Nonzero edge rows of the piecewise-constant truth (graph regime).
    #[arg(long)]
    pub edge_support: Option<usize>,
    /// Added to the diagonal of both covariance blocks.
    #[arg(long)]
    pub ridge_eps: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

overlay_fields!(SimulateArgs {
    regime, n, p, q, r, r_pca, p1, signal, seed, n_nnz, group_size,
    active_groups, grid, edge_support, ridge_eps, out,
});

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
pub struct FitArgs {
    /// Predictor matrix, headerless CSV with one row per observation.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Response matrix, same layout as `--x`.
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Number of canonical pairs.
    #[arg(long)]
    pub r: Option<usize>,
    /// Penalty level for the penalized methods.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Contiguous group size for the group penalty.
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Group label per covariate, one per line (overrides `--group-size`).
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Edge list with a `src,dst` header and 1-based indices.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Node coordinates for a k-nearest-neighbour graph (with `--knn`).
    #[arg(long)]
    pub coords: Option<PathBuf>,
    #[arg(long)]
    pub knn: Option<usize>,
    /// Ridge kernel as a headerless `p x p` CSV; identity when absent.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Ledoit-Wolf shrinkage of the response covariance (default on).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub shrink_sigma_y: Option<bool>,
    /// Column-center X and Y before fitting (default on).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub center: Option<bool>,
    #[arg(long, value_enum)]
    pub u_recovery: Option<URecoveryArg>,
    /// ADMM step parameter.
    #[arg(long)]
    pub delta: Option<f64>,
    /// ADMM stopping tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

overlay_fields!(FitArgs {
    x, y, method, r, rho, group_size, groups, edges, coords, knn, kernel,
    shrink_sigma_y, center, u_recovery, delta, eps, max_iter, out,
});

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
pub struct CvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Explicit comma-separated penalty grid.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Smallest grid point as a fraction of the largest useful penalty.
    #[arg(long)]
    pub grid_min_ratio: Option<f64>,
}

impl Overlay for CvArgs {
    fn overlay(self, other: Self) -> Self {
        Self {
            fit: self.fit.overlay(other.fit),
            folds: self.folds.or(other.folds),
            seed: self.seed.or(other.seed),
            grid: self.grid.or(other.grid),
            grid_size: self.grid_size.or(other.grid_size),
            grid_min_ratio: self.grid_min_ratio.or(other.grid_min_ratio),
        }
    }
}

/// Overrides for fields of the benchmark spec file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub grid_min_ratio: Option<f64>,
    #[arg(long)]
    pub validation_n: Option<usize>,
}
