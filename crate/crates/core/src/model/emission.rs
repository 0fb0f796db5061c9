//! Emission families and their per-state laws at a fixed parameter.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Emission family declared in a model specification.
///
/// Parameters consumed from `theta`, in order:
/// * `gaussian-mean`: one mean per state (shared, known `sigma`);
/// * `poisson-rate`: one rate per state (must be positive);
/// * `finite-alphabet`: for each state, `symbols - 1` logits against the
///   last symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmissionSpec {
    GaussianMean { sigma: f64 },
    PoissonRate,
    FiniteAlphabet { symbols: usize },
}

impl EmissionSpec {
    pub fn param_count(&self, states: usize) -> usize {
        match self {
            EmissionSpec::GaussianMean { .. } | EmissionSpec::PoissonRate => states,
            EmissionSpec::FiniteAlphabet { symbols } => states * symbols.saturating_sub(1),
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        match self {
            EmissionSpec::GaussianMean { sigma } if !(sigma.is_finite() && *sigma > 0.0) => {
                Err(Error::invalid(format!("gaussian sigma must be positive, got {sigma}")))
            }
            EmissionSpec::FiniteAlphabet { symbols } if *symbols < 2 => {
                Err(Error::invalid("finite alphabet needs at least two symbols"))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn resolve(&self, states: usize, params: &[f64]) -> Result<Emission> {
        match self {
            EmissionSpec::GaussianMean { sigma } => Emission::gaussian(params.to_vec(), *sigma),
            EmissionSpec::PoissonRate => Emission::poisson(params.to_vec()),
            EmissionSpec::FiniteAlphabet { symbols } => {
                let m = *symbols;
                let probs = (0..states)
                    .map(|s| {
                        let logits = &params[s * (m - 1)..(s + 1) * (m - 1)];
                        let max = logits.iter().copied().fold(0.0f64, f64::max);
                        let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                        w.push((-max).exp());
                        let total: f64 = w.iter().sum();
                        w.into_iter().map(|v| v / total).collect()
                    })
                    .collect();
                Emission::categorical(probs)
            }
        }
    }
}

/// Per-state emission laws `g(. | x)` at a fixed parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum Emission {
    Gaussian { means: Vec<f64>, sigma: f64, inv_two_var: f64, log_norm: f64 },
    Poisson { rates: Vec<f64>, log_rates: Vec<f64> },
    Categorical { probs: Vec<Vec<f64>>, log_probs: Vec<Vec<f64>> },
}

impl Emission {
    pub fn gaussian(means: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("gaussian sigma must be positive, got {sigma}")));
        }
        if means.is_empty() || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("gaussian means must be finite and non-empty"));
        }
        let var = sigma * sigma;
        Ok(Emission::Gaussian {
            means,
            sigma,
            inv_two_var: 0.5 / var,
            log_norm: -0.5 * (2.0 * std::f64::consts::PI * var).ln(),
        })
    }

    pub fn poisson(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid(format!("poisson rates must be positive, got {rates:?}")));
        }
        let log_rates = rates.iter().map(|r| r.ln()).collect();
        Ok(Emission::Poisson { rates, log_rates })
    }

    pub fn categorical(probs: Vec<Vec<f64>>) -> Result<Self> {
        let m = probs.first().map_or(0, Vec::len);
        if probs.is_empty() || m < 2 {
            return Err(Error::invalid("categorical emission needs at least one state and two symbols"));
        }
        for (s, row) in probs.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.len() != m || row.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("categorical row {s} is not a probability vector")));
            }
        }
        let log_probs = probs.iter().map(|row| row.iter().map(|p| p.ln()).collect()).collect();
        Ok(Emission::Categorical { probs, log_probs })
    }

    pub fn states(&self) -> usize {
        match self {
            Emission::Gaussian { means, .. } => means.len(),
            Emission::Poisson { rates, .. } => rates.len(),
            Emission::Categorical { probs, .. } => probs.len(),
        }
    }

    /// `log g(y | state)`; `-inf` off the support.
    pub fn log_density(&self, state: usize, y: f64) -> f64 {
        match self {
            Emission::Gaussian { means, inv_two_var, log_norm, .. } => {
                let d = y - means[state];
                log_norm - d * d * inv_two_var
            }
            Emission::Poisson { rates, log_rates } => match count(y) {
                Some(k) => k * log_rates[state] - rates[state] - ln_gamma(k + 1.0),
                None => f64::NEG_INFINITY,
            },
            Emission::Categorical { log_probs, .. } => match symbol(y, log_probs[state].len()) {
                Some(i) => log_probs[state][i],
                None => f64::NEG_INFINITY,
            },
        }
    }

    /// Fills `out[x] = log g(y | x)` for every state, sharing per-observation work.
    pub fn log_densities_into(&self, y: f64, out: &mut [f64]) {
        match self {
            Emission::Gaussian { means, inv_two_var, log_norm, .. } => {
                for (o, m) in out.iter_mut().zip(means) {
                    let d = y - m;
                    *o = log_norm - d * d * inv_two_var;
                }
            }
            Emission::Poisson { rates, log_rates } => match count(y) {
                Some(k) => {
                    let lf = ln_gamma(k + 1.0);
                    for ((o, r), lr) in out.iter_mut().zip(rates).zip(log_rates) {
                        *o = k * lr - r - lf;
                    }
                }
                None => out.fill(f64::NEG_INFINITY),
            },
            Emission::Categorical { log_probs, .. } => match symbol(y, log_probs[0].len()) {
                Some(i) => {
                    for (o, row) in out.iter_mut().zip(log_probs) {
                        *o = row[i];
                    }
                }
                None => out.fill(f64::NEG_INFINITY),
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> f64 {
        match self {
            Emission::Gaussian { means, sigma, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                means[state] + sigma * z
            }
            Emission::Poisson { rates, .. } => Poisson::new(rates[state]).expect("validated rate").sample(rng),
            Emission::Categorical { probs, .. } => {
                let u: f64 = rng.random();
                let row = &probs[state];
                let mut acc = 0.0;
                for (i, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i as f64;
                    }
                }
                (row.len() - 1) as f64
            }
        }
    }

    /// Mean of `g(. | state)` on the real line (symbols are their indices).
    pub fn mean(&self, state: usize) -> f64 {
        match self {
            Emission::Gaussian { means, .. } => means[state],
            Emission::Poisson { rates, .. } => rates[state],
            Emission::Categorical { probs, .. } => probs[state].iter().enumerate().map(|(i, p)| i as f64 * p).sum(),
        }
    }

    pub fn variance(&self, state: usize) -> f64 {
        match self {
            Emission::Gaussian { sigma, .. } => sigma * sigma,
            Emission::Poisson { rates, .. } => rates[state],
            Emission::Categorical { probs, .. } => {
                let m = self.mean(state);
                probs[state].iter().enumerate().map(|(i, p)| p * (i as f64 - m).powi(2)).sum()
            }
        }
    }

    /// True when the observation space is countable.
    pub fn is_countable(&self) -> bool {
        !matches!(self, Emission::Gaussian { .. })
    }

    /// Emission transportation constant `C_Y` when it is known in closed form
    /// (Gaussian: the variance).
    pub fn t1_constant(&self) -> Option<f64> {
        match self {
            Emission::Gaussian { sigma, .. } => Some(sigma * sigma),
            _ => None,
        }
    }
}

fn count(y: f64) -> Option<f64> {
    (y >= 0.0 && y.fract() == 0.0 && y.is_finite()).then_some(y)
}

fn symbol(y: f64, m: usize) -> Option<usize> {
    (y >= 0.0 && y.fract() == 0.0 && (y as usize) < m).then_some(y as usize)
}
