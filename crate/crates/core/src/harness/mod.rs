//! Training, evaluation, gradient checks and ablation sweeps behind the CLI.

pub mod ablate;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod gradcheck;
pub mod train;

pub use config::{EdgeSource, RunConfig};
