//! Stochastic Markov gradient descent (SMGD): stochastic optimization
//! constrained to a scaled integer lattice `alpha * Z^n`.
//!
//! Each step draws an unbiased gradient estimate and flips every coordinate
//! one lattice cell against the gradient sign with probability
//! `min(|g_i| / eta, 1)`. The crate bundles:
//!
//! * the lattice state and step/run machinery ([`lattice`], [`step`], [`run`]),
//! * pluggable gradient estimators over finite-sum costs ([`estimators`]),
//! * exact and Monte Carlo oracles for the per-step cost bound, the strongly
//!   convex rate bound, and the non-stochastic (MGD) corollaries ([`theory`]),
//! * a q-bit quantized MLP trained end-to-end on the lattice ([`qnn`]),
//! * MNIST IDX loading and synthetic blob datasets ([`data`]).

pub mod data;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod problems;
pub mod qnn;
pub mod rng;
pub mod run;
pub mod step;
pub mod theory;

pub use error::{Result, SmgdError};
pub use estimators::{CostProblem, EstimatorSpec, Norm};
pub use lattice::{LatticeVector, SmgdConfig};
pub use run::{RunTrace, TraceEntry};
pub use step::{GradientSample, StepOutcome};
pub use theory::{ConditionalExpectationOracle, TheoremId, TheoremReport};
