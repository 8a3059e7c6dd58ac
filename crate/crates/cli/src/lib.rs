//! Config-driven experiment runner over the `famseq` pipeline.

pub mod config;
pub mod error;
pub mod runner;

pub use config::{validate, DataSpec, Diagnostic, ExperimentConfig, ModelConfig, Preset, ProtocolKind, ResolvedConfig};
pub use error::{CliError, Result};
pub use runner::{execute, gen, rerender, run, RunSummary};
