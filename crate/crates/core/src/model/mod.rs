//! Parametric hidden Markov families over a finite state space.

mod emission;
mod simulate;
mod spec;
mod stationary;
mod types;
mod validate;

pub use emission::{Emission, EmissionSpec};
pub use simulate::simulate_path;
pub use spec::{HmmParams, HmmSpec, InitialLaw, TransitionSpec};
pub use stationary::{stationarity_residual, stationary_distribution, STATIONARY_TOL};
pub use types::{
    euclidean, tv_distance, ParamSpace, ParamVector, PathPair, ProbVector, TransitionMatrix, PROB_SUM_TOL,
};
pub use validate::{validate_spec, Check, ValidationReport};
