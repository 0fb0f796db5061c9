use rand::Rng;

use super::spec::{HmmParams, HmmSpec};
use super::types::PathPair;
use crate::error::{Error, Result};
use crate::rng::{label, stream};

/// Draws `(X_1^n, Y_1^n)` at `theta` from the stream `(seed, SIMULATE)`.
pub fn simulate_path(spec: &HmmSpec, theta: &[f64], n: usize, seed: u64) -> Result<PathPair> {
    if n == 0 {
        return Err(Error::invalid("path length must be at least 1"));
    }
    let params = spec.resolve_in_space(theta)?;
    let mut rng = stream(seed, &[label::SIMULATE]);
    Ok(params.simulate(n, &mut rng))
}

/// Index drawn from the weights in `probs` (which sum to one).
pub(crate) fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative total: take the last state with mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

impl HmmParams {
    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PathPair {
        let mut states = Vec::with_capacity(n);
        let mut observations = Vec::with_capacity(n);
        let mut x = draw_index(&self.initial, rng);
        for t in 0..n {
            if t > 0 {
                x = draw_index(self.transition.row(x), rng);
            }
            states.push(x);
            observations.push(self.emission.sample(x, rng));
        }
        PathPair { states, observations }
    }

    /// Observations only, without keeping the hidden path.
    pub fn simulate_observations<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        self.simulate(n, rng).observations
    }
}
