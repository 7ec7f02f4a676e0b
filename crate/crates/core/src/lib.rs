//! Error-compensated compressed SGD and the experiments around it.
//!
//! The crate is organised bottom-up: [`linalg`] (vectors, span projection,
//! minimum-norm solves), [`compressors`], [`oracles`] (stochastic gradient
//! problems), [`optimizers`] (step rules and the run driver), [`analysis`]
//! (trace rows, summaries, bounds) and [`checks`] (self-contained
//! verifications used by the CLI and the acceptance suite).

pub mod analysis;
pub mod checks;
pub mod compressors;
pub mod error;
pub mod linalg;
pub mod optimizers;
pub mod oracles;
pub mod rng;

pub use analysis::{summarize, RunSummary, SpanTracker, TraceRow};
pub use compressors::{compress, CompressorKind, CompressorSpec, SignZero};
pub use error::{Error, Result};
pub use linalg::{min_norm_solution, DenseMatrix, SpanBasis, Vector};
pub use optimizers::{
    init_state, run, run_observed, step, OptimizerSpec, OptimizerState, Projection, RecordingOptions, Rule,
    RunConfig, Schedule, Trace,
};
pub use oracles::{build_oracle, Oracle, OracleKind, OracleMeta};
pub use rng::{stream, Stream, StreamRng};
