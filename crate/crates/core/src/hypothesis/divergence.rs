use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{euclidean, EmissionSpec, HmmSpec, ParamSpace, ParamVector};
use crate::rng::{label, stream};
use crate::stats::{mean, std_error};

/// One rung of the doubling ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderRung {
    pub n: usize,
    pub h_n: f64,
    pub se: f64,
}

/// Monte Carlo estimate of `H_n(a | b) = E_a[l_n(a) - l_n(b)] / n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceEstimate {
    pub theta_a: ParamVector,
    pub theta_b: ParamVector,
    pub n: usize,
    pub replicates: usize,
    pub h_n: f64,
    pub se: f64,
    /// Limit estimate: `H_n` at the largest rung.
    pub j_limit: f64,
    /// `2 H_n - H_{n/2}`, which removes a `1/n` bias term.
    pub richardson: f64,
    /// `H_n - H_{n/2}`.
    pub increment: f64,
    /// Smallest rung with `H_m >= J / 2`.
    pub n_half: Option<usize>,
    /// Rungs `n, n/2, n/4, ...` evaluated on prefixes of the same paths.
    pub ladder: Vec<LadderRung>,
}

const MIN_RUNG: usize = 8;

pub fn estimate_divergence(
    spec: &HmmSpec,
    theta_a: &[f64],
    theta_b: &[f64],
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<DivergenceEstimate> {
    if n == 0 || replicates == 0 {
        return Err(Error::invalid("divergence estimate needs n >= 1 and at least one replicate"));
    }
    let a = spec.resolve_in_space(theta_a)?;
    let b = spec.resolve_in_space(theta_b)?;
    let pa = ParamVector::new(theta_a.to_vec())?;
    let pb = ParamVector::new(theta_b.to_vec())?;

    let mut rungs = vec![n];
    while rungs.last().is_some_and(|m| m / 2 >= MIN_RUNG) {
        rungs.push(rungs.last().unwrap() / 2);
    }

    if theta_a == theta_b {
        let ladder = rungs.iter().map(|&m| LadderRung { n: m, h_n: 0.0, se: 0.0 }).collect();
        return Ok(DivergenceEstimate {
            theta_a: pa,
            theta_b: pb,
            n,
            replicates,
            h_n: 0.0,
            se: 0.0,
            j_limit: 0.0,
            richardson: 0.0,
            increment: 0.0,
            n_half: None,
            ladder,
        });
    }

    // per replicate: the log-ratio at every rung
    let per_rep: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[label::DIVERGENCE, r as u64]);
            let ys = a.simulate_observations(n, &mut rng);
            let ia = a.log_likelihood_increments(&ys)?;
            let ib = b.log_likelihood_increments(&ys)?;
            let mut prefix = Vec::with_capacity(n);
            let mut acc = 0.0;
            for (x, y) in ia.iter().zip(&ib) {
                acc += x - y;
                prefix.push(acc);
            }
            Ok(rungs.iter().map(|&m| prefix[m - 1] / m as f64).collect())
        })
        .collect::<Result<_>>()?;

    let ladder: Vec<LadderRung> = rungs
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let vals: Vec<f64> = per_rep.iter().map(|v| v[k]).collect();
            LadderRung { n: m, h_n: mean(&vals), se: std_error(&vals) }
        })
        .collect();
    let top = &ladder[0];
    let (richardson, increment) = match ladder.get(1) {
        Some(half) => (2.0 * top.h_n - half.h_n, top.h_n - half.h_n),
        None => (top.h_n, 0.0),
    };
    let j = top.h_n;
    let n_half = ladder.iter().rev().find(|r| r.h_n >= 0.5 * j).map(|r| r.n);
    Ok(DivergenceEstimate {
        theta_a: pa,
        theta_b: pb,
        n,
        replicates,
        h_n: top.h_n,
        se: top.se,
        j_limit: j,
        richardson,
        increment,
        n_half,
        ladder,
    })
}

/// A divergence value with its standard error (zero for closed forms).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceValue {
    pub j: f64,
    pub se: f64,
}

/// Supplies `J(a | b)`.
pub trait DivergenceSource: Sync {
    fn divergence(&self, a: &[f64], b: &[f64]) -> Result<DivergenceValue>;
}

/// `J` by [`estimate_divergence`] at a fixed length.
#[derive(Clone, Debug)]
pub struct MonteCarloDivergence<'a> {
    pub spec: &'a HmmSpec,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl DivergenceSource for MonteCarloDivergence<'_> {
    fn divergence(&self, a: &[f64], b: &[f64]) -> Result<DivergenceValue> {
        let est = estimate_divergence(self.spec, a, b, self.n, self.replicates, self.seed)?;
        Ok(DivergenceValue { j: est.j_limit, se: est.se })
    }
}

/// Exact `J` for the single-state Gaussian family: `|a - b|^2 / (2 sigma^2)`.
#[derive(Clone, Copy, Debug)]
pub struct IidGaussianDivergence {
    pub sigma: f64,
}

impl IidGaussianDivergence {
    /// Returns `None` unless `spec` is the single-state Gaussian-mean family.
    pub fn for_spec(spec: &HmmSpec) -> Option<Self> {
        match spec.emission_spec() {
            EmissionSpec::GaussianMean { sigma } if spec.states() == 1 => Some(Self { sigma: *sigma }),
            _ => None,
        }
    }
}

impl DivergenceSource for IidGaussianDivergence {
    fn divergence(&self, a: &[f64], b: &[f64]) -> Result<DivergenceValue> {
        let d = euclidean(a, b);
        Ok(DivergenceValue { j: d * d / (2.0 * self.sigma * self.sigma), se: 0.0 })
    }
}

/// Linear envelope `kappa_1 |a - b| <= J(a | b) <= kappa_2 |a - b|` over a
/// sample of pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaBounds {
    pub kappa_1: f64,
    pub kappa_2: f64,
    /// `kappa_2 <= 2 kappa_1`.
    pub valid: bool,
    pub pairs: usize,
    pub ratios: Vec<f64>,
}

pub const MIN_KAPPA_PAIRS: usize = 50;

pub fn fit_kappa(source: &dyn DivergenceSource, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<KappaBounds> {
    if pairs.len() < MIN_KAPPA_PAIRS {
        return Err(Error::invalid(format!("fit_kappa needs at least {MIN_KAPPA_PAIRS} pairs, got {}", pairs.len())));
    }
    let ratios: Vec<f64> = pairs
        .par_iter()
        .map(|(a, b)| {
            let dist = euclidean(a, b);
            if dist == 0.0 {
                return Err(Error::invalid("fit_kappa pairs must be distinct"));
            }
            let v = source.divergence(a, b)?;
            if v.j <= 3.0 * v.se {
                return Err(Error::Identifiability { a: a.clone(), b: b.clone(), j: v.j, se: v.se });
            }
            Ok(v.j / dist)
        })
        .collect::<Result<_>>()?;
    let kappa_1 = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let kappa_2 = ratios.iter().copied().fold(0.0, f64::max);
    Ok(KappaBounds { kappa_1, kappa_2, valid: kappa_2 <= 2.0 * kappa_1, pairs: pairs.len(), ratios })
}

/// Pairs of points drawn uniformly from `space` whose distance lies in
/// `[min_dist, max_dist]` (rejection sampling).
pub fn sample_pairs(
    space: &ParamSpace,
    count: usize,
    min_dist: f64,
    max_dist: f64,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if !(min_dist >= 0.0 && max_dist > min_dist) {
        return Err(Error::invalid("need 0 <= min_dist < max_dist"));
    }
    let mut rng = stream(seed, &[label::DIVERGENCE, u64::MAX]);
    let draw = |rng: &mut crate::rng::StreamRng| -> Vec<f64> {
        space.lower().iter().zip(space.upper()).map(|(l, u)| rng.random_range(*l..*u)).collect()
    };
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::invalid("could not find pairs at the requested distances inside the box"));
        }
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let d = euclidean(&a, &b);
        if d >= min_dist && d <= max_dist {
            out.push((a, b));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn iid() -> HmmSpec {
        HmmSpec::iid_gaussian(1.0, ParamSpace::new(vec![-1.0], vec![1.0]).unwrap()).unwrap()
    }

    #[test]
    fn equal_points_are_exactly_zero() {
        let est = estimate_divergence(&iid(), &[0.3], &[0.3], 100, 10, 1).unwrap();
        assert_eq!(est.h_n, 0.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn iid_gaussian_matches_closed_form() {
        let est = estimate_divergence(&iid(), &[0.5], &[-0.3], 400, 200, 3).unwrap();
        let exact = 0.8f64 * 0.8 / 2.0;
        assert!((est.h_n - exact).abs() < 3.0 * est.se, "{} vs {exact} (se {})", est.h_n, est.se);
        assert_eq!(est.ladder[0].n, 400);
        assert_eq!(est.ladder.last().unwrap().n, 12);
    }

    #[test]
    fn kappa_envelope_examples() {
        let src = IidGaussianDivergence { sigma: 1.0 };
        // ratio J/|d| = |d|/2 ranges over [0.05, 1]
        let wide: Vec<_> = (0..50)
            .map(|k| {
                let d = 0.1 + 1.9 * k as f64 / 49.0;
                (vec![-1.0], vec![-1.0 + d])
            })
            .collect();
        let kb = fit_kappa(&src, &wide).unwrap();
        assert_abs_diff_eq!(kb.kappa_2 / kb.kappa_1, 20.0, epsilon = 1e-12);
        assert!(!kb.valid);
        let thin: Vec<_> = (0..50).map(|k| (vec![-0.5], vec![0.4 + 0.2 * k as f64 / 49.0])).collect();
        assert!(fit_kappa(&src, &thin).unwrap().valid);
        let same = vec![(vec![0.0], vec![0.5]); 50];
        let kb = fit_kappa(&src, &same).unwrap();
        assert_eq!(kb.kappa_1, kb.kappa_2);
        assert!(fit_kappa(&src, &same[..10]).is_err());
    }

    #[test]
    fn sampled_pairs_respect_distances() {
        let space = ParamSpace::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let pairs = sample_pairs(&space, 60, 0.9, 1.1, 4).unwrap();
        assert!(pairs.iter().all(|(a, b)| {
            let d = euclidean(a, b);
            (0.9..=1.1).contains(&d) && space.contains(a) && space.contains(b)
        }));
    }
}
