use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::mcmc::{rw_metropolis, McmcConfig};
use super::prior::{Prior, PriorSpec};
use crate::error::{Error, Result};
use crate::hypothesis::EpsSchedule;
use crate::model::{EmissionSpec, HmmSpec};
use crate::rng::{derive_seed, label, stream};
use crate::stats::{mean, normal_cdf, std_error};

/// Posterior mass outside `|theta - theta_0| > M eps_n`, averaged over data
/// sets simulated under `theta_0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionDiagnostic {
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<f64>,
    pub eps: Vec<f64>,
    /// `[n][M]`.
    pub outside_mass: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    /// Closed form for the single-state Gaussian-mean family with a uniform
    /// prior, averaged over the same data sets.
    pub exact: Option<Vec<Vec<f64>>>,
    /// Standard error of the paired differences between the Monte Carlo and
    /// closed-form masses.
    pub exact_gap_se: Option<Vec<Vec<f64>>>,
    pub replicates: usize,
    pub warnings: Vec<String>,
}

impl ContractionDiagnostic {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "eps", "M", "radius", "outside_mass", "se", "exact"])?;
        for (a, &n) in self.n_grid.iter().enumerate() {
            for (b, &m) in self.m_grid.iter().enumerate() {
                let exact = self.exact.as_ref().map(|e| e[a][b].to_string()).unwrap_or_default();
                w.write_record([
                    n.to_string(),
                    self.eps[a].to_string(),
                    m.to_string(),
                    (m * self.eps[a]).to_string(),
                    self.outside_mass[a][b].to_string(),
                    self.se[a][b].to_string(),
                    exact,
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Posterior mass outside `|mu - mu_0| <= radius` for `N(mu, sigma^2)` data,
/// uniform prior on `[lo, hi]`: the posterior is `N(ybar, sigma^2 / n)`
/// truncated to the box.
pub fn conjugate_outside_mass(ys: &[f64], sigma: f64, mu0: f64, radius: f64, lo: f64, hi: f64) -> f64 {
    let n = ys.len() as f64;
    let ybar = ys.iter().sum::<f64>() / n;
    let s = sigma / n.sqrt();
    let cdf = |x: f64| normal_cdf((x - ybar) / s);
    let total = cdf(hi) - cdf(lo);
    let a = (mu0 - radius).max(lo);
    let b = (mu0 + radius).min(hi);
    let inside = if b > a { cdf(b) - cdf(a) } else { 0.0 };
    (1.0 - inside / total).clamp(0.0, 1.0)
}

/// Data set `r` at size `n` comes from stream `[DATA, n, r]`; its chain
/// uses seed `derive_seed(mcmc.seed, [MCMC, n, r])` and starts at `theta_0`.
#[allow(clippy::too_many_arguments)]
pub fn contraction_diagnostic(
    spec: &HmmSpec,
    prior: &Prior,
    theta0: &[f64],
    n_grid: &[usize],
    m_grid: &[f64],
    replicates: usize,
    eps: EpsSchedule,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<ContractionDiagnostic> {
    if n_grid.is_empty() || m_grid.is_empty() || replicates < 2 {
        return Err(Error::invalid("contraction diagnostic needs n and M grids and at least two replicates"));
    }
    let mut m_sorted = m_grid.to_vec();
    m_sorted.sort_by(f64::total_cmp);
    if m_sorted != m_grid || m_grid.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::invalid("M grid must be positive and increasing"));
    }
    let p0 = spec.resolve_in_space(theta0)?;
    let conjugate = match (spec.emission_spec(), prior.spec()) {
        (EmissionSpec::GaussianMean { sigma }, PriorSpec::Uniform) if spec.states() == 1 => Some(*sigma),
        _ => None,
    };
    let mut outside_mass = Vec::new();
    let mut se = Vec::new();
    let mut exact_rows = Vec::new();
    let mut gap_rows = Vec::new();
    let mut warnings = Vec::new();
    let mut eps_values = Vec::new();
    for &n in n_grid {
        let e = eps.eps(n);
        eps_values.push(e);
        // per replicate: (MC masses, exact masses, warning)
        let per_rep: Vec<(Vec<f64>, Vec<f64>, Option<String>)> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, &[label::DATA, n as u64, r as u64]);
                let ys = p0.simulate_observations(n, &mut rng);
                let cfg = McmcConfig {
                    seed: derive_seed(mcmc.seed, &[label::MCMC, n as u64, r as u64]),
                    start: Some(theta0.to_vec()),
                    ..mcmc.clone()
                };
                let run = rw_metropolis(spec, prior, &ys, &cfg)?;
                let masses = m_grid.iter().map(|m| run.mass_outside(theta0, m * e)).collect();
                let exact = match conjugate {
                    Some(sigma) => m_grid
                        .iter()
                        .map(|m| {
                            conjugate_outside_mass(
                                &ys,
                                sigma,
                                theta0[0],
                                m * e,
                                spec.space().lower()[0],
                                spec.space().upper()[0],
                            )
                        })
                        .collect(),
                    None => Vec::new(),
                };
                Ok((masses, exact, run.warning.map(|w| format!("n = {n}, replicate {r}: {w}"))))
            })
            .collect::<Result<_>>()?;
        let mc: Vec<Vec<f64>> = (0..m_grid.len()).map(|k| per_rep.iter().map(|p| p.0[k]).collect()).collect();
        outside_mass.push(mc.iter().map(|c| mean(c)).collect());
        se.push(mc.iter().map(|c| std_error(c)).collect());
        if conjugate.is_some() {
            exact_rows
                .push((0..m_grid.len()).map(|k| mean(&per_rep.iter().map(|p| p.1[k]).collect::<Vec<_>>())).collect());
            gap_rows.push(
                (0..m_grid.len())
                    .map(|k| std_error(&per_rep.iter().map(|p| p.0[k] - p.1[k]).collect::<Vec<_>>()))
                    .collect(),
            );
        }
        warnings.extend(per_rep.into_iter().filter_map(|p| p.2));
    }
    Ok(ContractionDiagnostic {
        n_grid: n_grid.to_vec(),
        m_grid: m_grid.to_vec(),
        eps: eps_values,
        outside_mass,
        se,
        exact: conjugate.map(|_| exact_rows),
        exact_gap_se: conjugate.map(|_| gap_rows),
        replicates,
        warnings,
    })
}
