//! Asymptotics of the first time a continuous-time Markov chain holds at its
//! origin for a full threshold period, and the chains obtained by
//! conditioning that time to be large.
//!
//! The crate is organised bottom-up:
//!
//! - [`chain`]: chain specifications, validation, standard families.
//! - [`spectral`]: dense solves, Perron decay, matrix-exponential action.
//! - [`hitting`]: never-hit probabilities, hitting-time transforms, decay
//!   parameters, birth–death closed forms.
//! - [`asymptotics`]: the return-cycle transform, the decay rate `φ` and the
//!   limit vectors.
//! - [`renewal`]: deterministic survival curves from the renewal equation.
//! - [`conditioned`]: the conditioned and transformed chains.
//! - [`montecarlo`]: exact-event simulation and estimators.
//! - [`coinruns`]: coin-run constants and the Poisson special case.
//! - [`analysis`]: the end-to-end report used by the command line.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod asymptotics;
pub mod chain;
pub mod coinruns;
pub mod conditioned;
pub mod error;
pub mod hitting;
pub mod montecarlo;
pub mod renewal;
pub mod spectral;

pub use chain::{build_birth_death, parse_spec, poisson_chain, AugmentedState, ChainSpec};
pub use error::{Error, Result};
