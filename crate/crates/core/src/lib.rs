//! Training, feasibility learning and probabilistic verification for small
//! recurrent gridworld policies.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`env`] — partially observable grid environments (single-agent
//!    navigation, two-agent box pushing).
//! 2. [`rl`] — recurrent Q-learning (episodic replay, target network,
//!    Polyak averaging, backpropagation through time).
//! 3. [`feasibility`] — records (state, hidden-state) pairs, synthesizes
//!    negatives and trains the feasibility classifier with a Hoeffding-sized
//!    validation report.
//! 4. [`verifier`] — classifier-filtered Monte Carlo estimation of the
//!    violating hidden-state volume with an explicit error budget, plus the
//!    unfiltered estimator and multi-agent max-aggregation.
//! 5. [`baseline`] — interval bound propagation, exhaustive hidden-state
//!    enumeration for tiny instances and a discretized volume baseline.

pub mod baseline;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod feasibility;
pub mod nn;
pub mod rl;
pub mod rngstream;
pub mod tensor;
pub mod textdoc;
pub mod verifier;

pub use error::{Error, Result};

/// Version stamp embedded in certificates and artifact headers.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
