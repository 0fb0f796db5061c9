use serde::Serialize;

use super::emission::Emission;
use super::spec::HmmSpec;
use super::stationary::{stationarity_residual, STATIONARY_TOL};
use super::types::PROB_SUM_TOL;

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name, passed, detail: detail.into() });
    }
}

/// Runs every structural check on `spec` at `theta` and lists the results;
/// nothing here returns an error.
pub fn validate_spec(spec: &HmmSpec, theta: &[f64]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let dim_ok = theta.len() == spec.dim();
    report.push("dimension", dim_ok, format!("expected {}, got {}", spec.dim(), theta.len()));
    if !dim_ok {
        return report;
    }
    let finite = theta.iter().all(|v| v.is_finite());
    report.push("finite", finite, "");
    report.push("in_space", spec.space().contains(theta), format!("{:?}", theta));

    match spec.transition(theta) {
        Ok(q) => {
            let (row, dev) = q.worst_row_deviation().unwrap_or((0, 0.0));
            report.push("row_stochastic", dev <= PROB_SUM_TOL, format!("worst row {row} deviates by {dev:e}"));
        }
        Err(e) => report.push("row_stochastic", false, e.to_string()),
    }

    match spec.resolve(theta) {
        Ok(params) => {
            let initial_sum: f64 = params.initial.iter().sum();
            report.push("initial_probability", (initial_sum - 1.0).abs() <= PROB_SUM_TOL, format!("sum {initial_sum}"));
            if spec.is_stationary() {
                let r = stationarity_residual(&params.transition, &params.initial);
                report.push("stationary", r <= STATIONARY_TOL, format!("residual {r:e}"));
            }
            for s in 0..params.states() {
                let mass = total_mass(&params.emission, s);
                report.push("emission_mass", (mass - 1.0).abs() <= 1e-6, format!("state {s}: {mass}"));
            }
        }
        Err(e) => report.push("resolve", false, e.to_string()),
    }
    report
}

/// Numerical total mass of `g(. | state)`.
fn total_mass(emission: &Emission, state: usize) -> f64 {
    match emission {
        Emission::Gaussian { means, sigma, .. } => {
            // Simpson's rule over +-12 sigma
            let (lo, hi) = (means[state] - 12.0 * sigma, means[state] + 12.0 * sigma);
            let k = 2000;
            let h = (hi - lo) / k as f64;
            let f = |y: f64| emission.log_density(state, y).exp();
            let inner: f64 = (1..k).map(|i| f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
            (f(lo) + f(hi) + inner) * h / 3.0
        }
        Emission::Poisson { rates, .. } => {
            let upper = (rates[state] + 40.0 * rates[state].sqrt() + 40.0).ceil() as usize;
            (0..=upper).map(|k| emission.log_density(state, k as f64).exp()).sum()
        }
        Emission::Categorical { probs, .. } => {
            (0..probs[state].len()).map(|k| emission.log_density(state, k as f64).exp()).sum()
        }
    }
}
