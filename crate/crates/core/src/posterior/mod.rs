//! Posterior sampling and the diagnostics behind posterior contraction and
//! the Bernstein-von Mises approximation.

mod asymptotics;
mod bvm;
mod contraction;
mod diagnostics;
mod kl;
mod mcmc;
mod prior;
mod tv;

pub use asymptotics::{
    check_positive_definite, delta_n0, fd_step, hessian, lan_remainder, lan_remainder_value, relative_frobenius, score,
    score_and_fisher, score_increments, FisherEstimate, LanReport, LanRow,
};
pub use bvm::{bvm_diagnostic, BvmDiagnostic};
pub use contraction::{conjugate_outside_mass, contraction_diagnostic, ContractionDiagnostic};
pub use diagnostics::{batch_means_se, effective_sample_size, gelman_rubin};
pub use kl::{
    check_prior_mass, iid_gaussian_bn_radius, kl_moments, normal_abs_moment, BnMembership, KlMoments, PriorMassPlan,
    PriorMassReport, PriorMassRow,
};
pub use mcmc::{run_chains, rw_metropolis, McmcConfig, PosteriorRun, MIN_ITERATIONS};
pub use prior::{Prior, PriorSpec};
pub use tv::{bvm_tv_distance, tv_to_normal, TvEstimate};
