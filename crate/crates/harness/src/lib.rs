//! Configuration-driven experiments for the sylgraph estimator: synthetic
//! convergence studies, penalty sweeps, generator-mismatch studies and fits of
//! external SYGT datasets. Results are written as CSV.

pub mod config;
pub mod experiment;

pub use config::{ExperimentSpec, Generator, Kind, SpecError};
pub use experiment::{HarnessError, RunRecord};
