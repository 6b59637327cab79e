//! Sparse per-mode conditional-dependence graphs for tensor-valued data.
//!
//! Data follow the Sylvester model `sum_k X x_k Psi_k = T` with white noise `T`,
//! so the precision of `vec(X)` is the squared Kronecker sum
//! `(Psi_1 (+) ... (+) Psi_K)^2`. The crate provides
//!
//! - [`tensor`]: dense tensors, unfoldings and mode products,
//! - [`kron`]: Kronecker sums/products and their spectral form,
//! - [`synth`]: ground-truth generators and samplers,
//! - [`solver`]: the nodewise coordinate-descent estimator,
//! - [`metrics`]: support recovery and error metrics,
//! - [`format`]: the SYGT binary tensor format.

pub mod error;
pub mod format;
pub mod kron;
pub mod metrics;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use kron::{FactorList, SymFactor};
pub use solver::{fit, FactorSet, FitReport, SolverConfig};
pub use synth::{Dataset, GraphSpec};
pub use tensor::DenseTensor;
