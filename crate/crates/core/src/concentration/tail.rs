use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{HmmParams, HmmSpec};
use crate::rng::{label, stream};
use crate::stats::{binomial_se, mean};

/// Smallest replicate count accepted by [`tail_check`].
pub const MIN_TAIL_REPLICATES: usize = 1000;

/// Empirical upper-tail frequencies of a functional against the
/// sub-Gaussian bound `exp(-r^2 / (2 n C))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailCheck {
    pub radius_grid: Vec<f64>,
    pub empirical_freq: Vec<f64>,
    pub theoretical_bound: Vec<f64>,
    pub binomial_se: Vec<f64>,
    pub replicates: usize,
    pub n: usize,
    /// The constant `C` in the bound, for `F_n` this is `C_tilde`.
    pub variance_proxy: f64,
    pub seed: u64,
    pub sample_mean: f64,
    pub max_deviation: f64,
}

impl TailCheck {
    /// True when every frequency is at most the bound plus `k` standard errors.
    pub fn dominated(&self, k: f64) -> bool {
        self.violations(k).is_empty()
    }

    /// Radii where the frequency exceeds the bound by more than `k` standard errors.
    pub fn violations(&self, k: f64) -> Vec<f64> {
        self.radius_grid
            .iter()
            .zip(&self.empirical_freq)
            .zip(self.theoretical_bound.iter().zip(&self.binomial_se))
            .filter(|((_, f), (b, se))| **f > **b + k * **se)
            .map(|((r, _), _)| *r)
            .collect()
    }

    /// CSV with columns `radius, empirical_freq, theoretical_bound, binomial_se`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["radius", "empirical_freq", "theoretical_bound", "binomial_se"])?;
        for i in 0..self.radius_grid.len() {
            w.write_record([
                self.radius_grid[i].to_string(),
                self.empirical_freq[i].to_string(),
                self.theoretical_bound[i].to_string(),
                self.binomial_se[i].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Simulates `replicates` paths of length `n` under `theta_gen`, evaluates
/// `functional` on each and compares the tail of `F - mean(F)` with the bound.
#[allow(clippy::too_many_arguments)]
pub fn tail_check<F>(
    spec: &HmmSpec,
    theta_gen: &[f64],
    functional: F,
    variance_proxy: f64,
    n: usize,
    replicates: usize,
    radii: &[f64],
    seed: u64,
) -> Result<TailCheck>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if replicates < MIN_TAIL_REPLICATES {
        return Err(Error::invalid(format!("tail check needs at least {MIN_TAIL_REPLICATES} replicates")));
    }
    if n == 0 || radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::invalid("tail check needs n >= 1 and positive radii"));
    }
    if !(variance_proxy > 0.0) {
        return Err(Error::invalid(format!("variance proxy must be positive, got {variance_proxy}")));
    }
    let params = spec.resolve_in_space(theta_gen)?;
    let values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[label::TAIL, r as u64]);
            functional(&params.simulate_observations(n, &mut rng))
        })
        .collect::<Result<_>>()?;
    let centre = mean(&values);
    let deviations: Vec<f64> = values.iter().map(|v| v - centre).collect();
    let max_deviation = deviations.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let m = replicates as f64;
    let empirical_freq: Vec<f64> =
        radii.iter().map(|r| deviations.iter().filter(|d| **d > *r).count() as f64 / m).collect();
    let theoretical_bound = radii.iter().map(|r| (-r * r / (2.0 * n as f64 * variance_proxy)).exp()).collect();
    let binomial_se = empirical_freq.iter().map(|p| binomial_se(*p, replicates)).collect();
    Ok(TailCheck {
        radius_grid: radii.to_vec(),
        empirical_freq,
        theoretical_bound,
        binomial_se,
        replicates,
        n,
        variance_proxy,
        seed,
        sample_mean: centre,
        max_deviation,
    })
}

/// `y -> l_n(theta_1, y) - l_n(theta_2, y)` with both models resolved once.
pub struct LoglikRatio {
    a: HmmParams,
    b: HmmParams,
}

impl LoglikRatio {
    pub fn new(spec: &HmmSpec, theta_1: &[f64], theta_2: &[f64]) -> Result<Self> {
        Ok(Self { a: spec.resolve_in_space(theta_1)?, b: spec.resolve_in_space(theta_2)? })
    }

    pub fn eval(&self, ys: &[f64]) -> Result<f64> {
        Ok(self.a.log_likelihood(ys)? - self.b.log_likelihood(ys)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamSpace;

    fn iid() -> HmmSpec {
        HmmSpec::iid_gaussian(1.0, ParamSpace::new(vec![-2.0], vec![2.0]).unwrap()).unwrap()
    }

    #[test]
    fn constant_functional_has_empty_tail() {
        let tc = tail_check(&iid(), &[0.0], |_| Ok(3.0), 1.0, 10, 1000, &[0.01, 1.0], 1).unwrap();
        assert_eq!(tc.empirical_freq, vec![0.0, 0.0]);
        assert!(tc.dominated(3.0));
    }

    #[test]
    fn sum_of_gaussians_is_dominated() {
        // sum of n standard normals: 1-Lipschitz under l1, C = 1
        let radii: Vec<f64> = (1..=8).map(|k| k as f64 * 5.0).collect();
        let tc = tail_check(&iid(), &[0.0], |y| Ok(y.iter().sum()), 1.0, 50, 2000, &radii, 9).unwrap();
        assert!(tc.dominated(3.0), "{tc:?}");
        // radii beyond the largest deviation see nothing
        let far = tc.max_deviation + 1.0;
        let tc2 = tail_check(&iid(), &[0.0], |y| Ok(y.iter().sum()), 1.0, 50, 2000, &[far], 9).unwrap();
        assert_eq!(tc2.empirical_freq, vec![0.0]);
    }

    #[test]
    fn too_few_replicates_rejected() {
        assert!(tail_check(&iid(), &[0.0], |_| Ok(0.0), 1.0, 10, 999, &[1.0], 1).is_err());
    }
}
