use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::TransitionMatrix;

/// Default truncation tolerance for the mixing series.
pub const MIXING_TOL: f64 = 1e-8;

const MAX_TERMS: usize = 1_000_000;

/// Truncated evaluation of `D = sum_{t>=1} delta(Q^t)`, where `delta` is the
/// Dobrushin coefficient.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingReport {
    pub d_theta: f64,
    /// Number of terms summed.
    pub truncation_t: usize,
    /// Upper bound on the omitted terms.
    pub tail_bound: f64,
    /// Smallest power with `Q^r` entrywise positive.
    pub r: usize,
    /// `delta(Q^r)`.
    pub eta: f64,
}

/// Sums `delta(Q^t)` until the remainder is certified below `tol`.
///
/// Submultiplicativity gives `delta(Q^{T+i+kr}) <= delta(Q^{T+i}) eta^k`, so
/// the terms after `T` are bounded by `sum_{i=1..r} delta(Q^{T+i}) / (1 - eta)`.
pub fn mixing_coefficient(q: &TransitionMatrix, tol: f64) -> Result<MixingReport> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let s = q.states();
    if s == 1 {
        return Ok(MixingReport { d_theta: 0.0, truncation_t: 0, tail_bound: 0.0, r: 1, eta: 0.0 });
    }
    let r = primitivity_index(q).ok_or(Error::NotPrimitive { max_power: s * s })?;

    let mut deltas = Vec::new();
    let mut power = q.clone();
    for _ in 0..r {
        deltas.push(power.dobrushin());
        power = power.matmul(q);
    }
    let eta = deltas[r - 1];
    let mut truncation = 0;
    loop {
        let window: f64 = deltas[truncation..truncation + r].iter().sum();
        let tail_bound = window / (1.0 - eta);
        if tail_bound < tol {
            let d_theta = deltas[..truncation].iter().sum();
            return Ok(MixingReport { d_theta, truncation_t: truncation, tail_bound, r, eta });
        }
        if truncation >= MAX_TERMS {
            return Err(Error::Numeric(format!("mixing series not converged after {MAX_TERMS} terms (eta = {eta})")));
        }
        truncation += 1;
        deltas.push(power.dobrushin());
        power = power.matmul(q);
    }
}

/// Smallest `r <= S^2` with `Q^r > 0` entrywise.
pub fn primitivity_index(q: &TransitionMatrix) -> Option<usize> {
    let s = q.states();
    let mut power = q.clone();
    for r in 1..=s * s {
        if power.as_slice().iter().all(|v| *v > 0.0) {
            return Some(r);
        }
        power = power.matmul(q);
    }
    None
}
