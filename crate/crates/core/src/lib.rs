//! Canonical correlation analysis cast as reduced-rank regression.
//!
//! The response block is whitened, a (possibly penalized) multivariate
//! regression of the whitened response on the predictors is solved, and the
//! canonical directions are read off a small singular value decomposition.
//! Row-sparse, group-sparse, graph total-variation and ridge penalties are
//! supported; the first three are solved by ADMM.
//!
//! Besides the estimators the crate ships the synthetic canonical-pair
//! generators, the cross-validation protocol and the recovery metrics used
//! to benchmark them.

pub mod admm;
pub mod bench;
pub mod cca;
pub mod cv;
pub mod error;
pub mod exec;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod synth;

pub use admm::{AdmmConfig, AdmmState, Partition, SolveTrace};
pub use cca::{CcaModel, FitOptions, Method, Penalty, URecovery};
pub use error::{Error, Result};
pub use exec::Execution;
pub use graph::GraphStructure;
pub use linalg::{Mat, SvdTriple, SymMatrix};
pub use synth::{GroundTruth, Regime, Signal, SimConfig};
