//! Two-block (2BG) and three-block (3BG) Gibbs samplers for Bayesian
//! shrinkage regression under spike-and-slab and Bayesian-lasso priors.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: dataset and prior types, centering/standardization and the
//!   Cholesky machinery for `A_tau = XᵀX + D_tau⁻¹`.
//! * [`rand_dist`]: seedable variate generators.
//! * [`samplers`]: conditional draws, the two sweep schemes and the chain
//!   runner.
//! * [`diagnostics`]: autocorrelation, effective sample size and throughput.
//! * [`sim`]: synthetic data and the experiment grid.
//! * [`ingest`]: CSV loading and robust correlation screening.
//! * [`cli`]: the `simulate`, `fit` and `diagnose` commands.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod ingest;
pub mod model;
pub mod rand_dist;
pub mod samplers;
pub mod sim;

pub use error::{Error, Result};
pub use model::{CenteredDesign, ChainState, Dataset, Hyper, PriorConfig, SpikeSlab};
pub use rand_dist::RngStream;
pub use samplers::{run_chain, ChainOutput, SamplerConfig, SamplerKind};
