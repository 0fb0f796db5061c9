use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::prior::Prior;
use crate::error::{Error, Result};
use crate::model::HmmSpec;
use crate::rng::{derive_seed, label, stream};

pub const MIN_ITERATIONS: usize = 10_000;

/// Random-walk Metropolis settings. `iterations` counts every step,
/// burn-in included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Initial proposal sd per coordinate; defaults to 5% of the box width.
    #[serde(default)]
    pub initial_scale: Option<Vec<f64>>,
    /// Steps between scale updates during burn-in.
    #[serde(default = "default_window")]
    pub adapt_window: usize,
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_burn_in() -> f64 {
    0.2
}

fn default_thinning() -> usize {
    1
}

fn default_window() -> usize {
    50
}

impl McmcConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in_fraction: default_burn_in(),
            thinning: default_thinning(),
            initial_scale: None,
            adapt_window: default_window(),
            start: None,
            seed,
        }
    }

    pub fn with_start(mut self, start: Vec<f64>) -> Self {
        self.start = Some(start);
        self
    }

    pub fn burn_in(&self) -> usize {
        (self.iterations as f64 * self.burn_in_fraction).floor() as usize
    }

    /// Number of draws kept after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in()).div_ceil(self.thinning.max(1))
    }

    fn check(&self) -> Result<()> {
        if self.iterations < MIN_ITERATIONS {
            return Err(Error::invalid(format!(
                "MCMC needs at least {MIN_ITERATIONS} iterations, got {}",
                self.iterations
            )));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) || self.thinning == 0 || self.adapt_window == 0 {
            return Err(Error::invalid("burn-in fraction must lie in [0, 1) and thinning, window be positive"));
        }
        if let Some(s) = &self.initial_scale {
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::invalid("proposal scales must be positive"));
            }
        }
        Ok(())
    }
}

/// Retained draws of one chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorRun {
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    pub n: usize,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Frozen proposal sds.
    pub scales: Vec<f64>,
    /// Set when the post-burn-in acceptance rate is below 1% or above 90%.
    pub warning: Option<String>,
}

impl PosteriorRun {
    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[i]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let m = self.samples.len() as f64;
        (0..self.dim()).map(|i| self.samples.iter().map(|s| s[i]).sum::<f64>() / m).collect()
    }

    /// Fraction of draws farther than `radius` from `center`.
    pub fn mass_outside(&self, center: &[f64], radius: f64) -> f64 {
        let out = self.samples.iter().filter(|s| crate::model::euclidean(s, center) > radius).count();
        out as f64 / self.samples.len() as f64
    }

    /// One row per retained draw: `iter,theta_1,...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("theta_{i}")));
        w.write_record(&header)?;
        for (k, s) in self.samples.iter().enumerate() {
            let mut row = vec![(self.burn_in + k * self.thinning).to_string()];
            row.extend(s.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn log_target(spec: &HmmSpec, prior: &Prior, ys: &[f64], theta: &[f64]) -> Result<f64> {
    let lp = prior.log_density(theta);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    match spec.resolve(theta)?.log_likelihood(ys) {
        Ok(l) => Ok(lp + l),
        Err(Error::FilterDegenerate { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Random-walk Metropolis on `Theta` targeting the posterior given `ys`.
///
/// During burn-in the proposal sds are tuned every `adapt_window` steps: a
/// global multiplier follows the windowed acceptance rate and, once enough
/// draws exist, per-coordinate sds follow the running sample spread. The
/// scales are frozen after burn-in.
pub fn rw_metropolis(spec: &HmmSpec, prior: &Prior, ys: &[f64], config: &McmcConfig) -> Result<PosteriorRun> {
    config.check()?;
    let d = spec.dim();
    if prior.dim() != d {
        return Err(Error::Dimension { expected: d, got: prior.dim() });
    }
    if ys.is_empty() {
        return Err(Error::invalid("posterior needs at least one observation"));
    }
    let mut rng = stream(config.seed, &[label::MCMC]);
    let mut theta = config.start.clone().unwrap_or_else(|| prior.space().center());
    let mut current = log_target(spec, prior, ys, &theta)?;
    if current == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("starting point {theta:?} has zero posterior density")));
    }
    let base: Vec<f64> = match &config.initial_scale {
        Some(s) if s.len() == d => s.clone(),
        Some(s) => return Err(Error::Dimension { expected: d, got: s.len() }),
        None => prior.space().lower().iter().zip(prior.space().upper()).map(|(l, u)| 0.05 * (u - l)).collect(),
    };
    let target = if d == 1 { 0.44 } else { 0.234 };
    let mut scales = base.clone();
    let mut log_mult = 0.0f64;
    let burn_in = config.burn_in();

    // running moments of burn-in draws
    let mut count = 0usize;
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut window_accepts = 0usize;
    let mut spread = vec![0.0; d];

    let mut samples = Vec::with_capacity((config.iterations - burn_in) / config.thinning + 1);
    let mut accepted_after = 0usize;
    let mut proposal = vec![0.0; d];
    for it in 0..config.iterations {
        for i in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            proposal[i] = theta[i] + scales[i] * z;
        }
        let cand = log_target(spec, prior, ys, &proposal)?;
        let u: f64 = rng.random();
        let accept = cand > f64::NEG_INFINITY && u.ln() < cand - current;
        if accept {
            theta.copy_from_slice(&proposal);
            current = cand;
        }
        if it < burn_in {
            window_accepts += usize::from(accept);
            count += 1;
            for i in 0..d {
                sum[i] += theta[i];
                sum_sq[i] += theta[i] * theta[i];
            }
            if (it + 1) % config.adapt_window == 0 {
                let rate = window_accepts as f64 / config.adapt_window as f64;
                log_mult += rate - target;
                window_accepts = 0;
                if count >= 10 * config.adapt_window {
                    if spread.iter().all(|v| *v == 0.0) {
                        log_mult = 0.0;
                    }
                    spread = (0..d)
                        .map(|i| {
                            let m = sum[i] / count as f64;
                            (sum_sq[i] / count as f64 - m * m).max(0.0).sqrt()
                        })
                        .collect();
                }
                for i in 0..d {
                    let basis = if spread[i] > 0.0 { 2.4 / (d as f64).sqrt() * spread[i] } else { base[i] };
                    scales[i] = basis * log_mult.exp();
                }
                // restart the spread estimate so early transients fade
                if count >= 40 * config.adapt_window {
                    count = 0;
                    sum.iter_mut().for_each(|v| *v = 0.0);
                    sum_sq.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        } else {
            accepted_after += usize::from(accept);
            if (it - burn_in).is_multiple_of(config.thinning) {
                samples.push(theta.clone());
            }
        }
    }
    let kept_steps = config.iterations - burn_in;
    let acceptance_rate = accepted_after as f64 / kept_steps as f64;
    let warning = if !(0.01..=0.9).contains(&acceptance_rate) {
        let msg = format!("acceptance rate {acceptance_rate:.4} outside [0.01, 0.9] after adaptation");
        log::warn!("{msg}");
        Some(msg)
    } else {
        None
    };
    Ok(PosteriorRun {
        samples,
        acceptance_rate,
        n: ys.len(),
        seed: config.seed,
        iterations: config.iterations,
        burn_in,
        thinning: config.thinning,
        scales,
        warning,
    })
}

/// Independent chains; chain `c` uses seed `derive_seed(config.seed, [MCMC, c])`.
pub fn run_chains(
    spec: &HmmSpec,
    prior: &Prior,
    ys: &[f64],
    config: &McmcConfig,
    chains: usize,
) -> Result<Vec<PosteriorRun>> {
    (0..chains)
        .into_par_iter()
        .map(|c| {
            let cfg = McmcConfig { seed: derive_seed(config.seed, &[label::MCMC, c as u64]), ..config.clone() };
            rw_metropolis(spec, prior, ys, &cfg)
        })
        .collect()
}
