//! Numerical laboratory for parametric hidden Markov models on a finite,
//! known state space.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: parameter boxes, parametric families, stationary laws and
//!   path simulation.
//! * [`filtering`]: the prediction filter, the additive log-likelihood and a
//!   brute-force enumeration oracle.
//! * [`concentration`]: mixing coefficients, transportation constants,
//!   Lipschitz estimates and Monte Carlo tail checks.
//! * [`hypothesis`]: likelihood-ratio tests against points, balls and
//!   annuli, annulus coverings and error-rate studies.
//! * [`posterior`]: random-walk Metropolis, prior-mass and contraction
//!   diagnostics, score/Fisher estimates, LAN remainders and total-variation
//!   distance to the limiting normal.
//! * [`experiments`]: configuration files, run manifests and the commands
//!   behind the `hmmlab` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod error;
pub mod experiments;
pub mod filtering;
pub mod hypothesis;
pub mod model;
pub mod posterior;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use filtering::{log_likelihood, run_filter, FilterTrace};
pub use model::{HmmParams, HmmSpec, ParamSpace, ParamVector, PathPair, ProbVector, TransitionMatrix};
