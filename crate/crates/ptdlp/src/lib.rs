//! Discrete-space MCMC with parallel-tempered discrete Langevin proposals.
//!
//! The crate provides:
//!
//! * coordinate-factorized Langevin proposals over binary, ordinal, and
//!   one-hot spaces ([`proposal`]);
//! * unadjusted (DULA) and Metropolis-adjusted (DMALA) local kernels
//!   ([`chain`]) and their replica-exchange ensembles ([`tempering`]);
//! * automatic temperature-schedule tuning from pilot runs ([`tuning`]);
//! * evaluation metrics: RFF-approximated MMD, forward KL, and entropic
//!   mode coverage ([`metrics`]);
//! * exact dense-kernel verification on enumerable instances ([`oracle`]);
//! * RBM learning with block-Gibbs, PCD, and AIS ([`learning`]);
//! * an experiment harness and CLI ([`harness`]).

pub mod chain;
pub mod energy;
pub mod error;
pub mod harness;
pub mod learning;
pub mod metrics;
pub mod oracle;
pub mod proposal;
pub mod space;
pub mod tempering;
pub mod tuning;

pub use error::{Error, Result};
