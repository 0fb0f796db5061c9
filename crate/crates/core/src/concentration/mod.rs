//! Transportation-cost constants for HMM log-likelihoods and Monte Carlo
//! checks of the resulting sub-Gaussian tail bound.

mod constants;
mod lipschitz;
mod mixing;
mod tail;
mod wasserstein;

pub use constants::{emission_wasserstein, t1_constant, Branch, ConstantsBundle, TransportConstants};
pub use lipschitz::{lipschitz_estimates, LipschitzEstimates, RefinementDelta, SamplingPlan};
pub use mixing::{mixing_coefficient, primitivity_index, MixingReport, MIXING_TOL};
pub use tail::{tail_check, LoglikRatio, TailCheck, MIN_TAIL_REPLICATES};
pub use wasserstein::{wasserstein_1d, Distribution1d};
