//! Likelihood-ratio tests of a point null against annuli around it, with
//! Monte Carlo checks of their exponential error bounds.

mod covering;
mod divergence;
mod error_rates;
mod tests;

pub use covering::{
    annulus_meets_space, cover_annulus, cover_annulus_with, CoverStrategy, CoveringReport, GRID_DIVISIONS,
};
pub use divergence::{
    estimate_divergence, fit_kappa, sample_pairs, DivergenceEstimate, DivergenceSource, DivergenceValue,
    IidGaussianDivergence, KappaBounds, LadderRung, MonteCarloDivergence, MIN_KAPPA_PAIRS,
};
pub use error_rates::{
    annulus_alternatives, composite_type1_bound, composite_type2_bound, rate_constant, rejection_rate,
    verify_testing_condition, EpsSchedule, ErrorRateReport, ErrorRateRow, RateEstimate, SlopeFit, TestingPlan,
};
pub use tests::{
    build_ball_test, build_composite_test, build_simple_test, rejects, MemberTest, PreparedTest, TestFunction, TestKind,
};
