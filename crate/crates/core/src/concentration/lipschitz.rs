use rand::Rng;
use serde::{Deserialize, Serialize};

use super::constants::Branch;
use crate::error::{Error, Result};
use crate::model::{tv_distance, Emission, HmmParams, HmmSpec};
use crate::rng::{label, stream};

/// Where the sup-quotients are sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    /// Grid size on a continuous observation range.
    pub y_points: usize,
    /// Observation range; defaults to the emission means widened by four
    /// standard deviations (Gaussian) or the bulk of the largest rate (Poisson).
    pub y_range: Option<(f64, f64)>,
    /// Simplex lattice `{k / m}` with `m = simplex_resolution`.
    pub simplex_resolution: usize,
    /// Observation sequences driving the lagged filter maps.
    pub sequences: usize,
    /// Size of the local perturbations of a filter, in total variation.
    pub step: f64,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self { y_points: 201, y_range: None, simplex_resolution: 20, sequences: 16, step: 1e-5, seed: 0 }
    }
}

impl SamplingPlan {
    /// The same plan with `factor` times denser observation and simplex grids.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            y_points: (self.y_points - 1) * factor + 1,
            simplex_resolution: self.simplex_resolution * factor,
            ..self.clone()
        }
    }
}

/// Sampled sup-quotients. Each is a lower estimate of the true supremum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzEstimates {
    pub branch: Branch,
    pub horizon: usize,
    /// Sensitivity of one filter step to the observation.
    pub delta_1: f64,
    /// Sup-quotient of the lag-`t` filter map in its filter argument, `t = 0..=horizon`;
    /// zero from the first lag lost in rounding noise onwards.
    pub per_lag: Vec<f64>,
    pub delta_2_truncated: f64,
    /// Largest ratio of consecutive lag quotients over the last few lags.
    pub decay_ratio: f64,
    /// Geometric extrapolation of the lags beyond the horizon (infinite when
    /// the quotients do not decay).
    pub delta_2_tail: f64,
    pub delta_2: f64,
    /// Sup-quotient of `log sum_x p(x) g(y|x)` in `y` with `p` fixed.
    pub l_y: f64,
    /// Same in `p` (total variation) with `y` fixed.
    pub l_p: f64,
    /// Twice the Lipschitz norm under `d_Y + TV`; since that metric is a sum,
    /// the norm is `max(l_y, l_p)`.
    pub l_lip: f64,
    pub y_grid_points: usize,
    pub simplex_points: usize,
    pub plan: SamplingPlan,
}

/// Relative change of each estimate between two plans.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementDelta {
    pub delta_1: f64,
    pub delta_2: f64,
    pub l_lip: f64,
}

impl RefinementDelta {
    pub fn between(coarse: &LipschitzEstimates, fine: &LipschitzEstimates) -> Self {
        let rel = |a: f64, b: f64| if a == b { 0.0 } else { (b - a).abs() / a.abs().max(b.abs()) };
        Self {
            delta_1: rel(coarse.delta_1, fine.delta_1),
            delta_2: rel(coarse.delta_2, fine.delta_2),
            l_lip: rel(coarse.l_lip, fine.l_lip),
        }
    }
}

pub fn lipschitz_estimates(
    spec: &HmmSpec,
    theta: &[f64],
    horizon: usize,
    plan: &SamplingPlan,
    branch: Branch,
) -> Result<LipschitzEstimates> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if plan.y_points < 2 || plan.simplex_resolution == 0 || plan.sequences == 0 {
        return Err(Error::invalid("sampling plan is empty"));
    }
    if !(plan.step > 0.0 && plan.step < 0.5) {
        return Err(Error::invalid(format!("perturbation step must lie in (0, 0.5), got {}", plan.step)));
    }
    let params = spec.resolve(theta)?;
    if branch == Branch::Countable && !params.emission.is_countable() {
        return Err(Error::Unsupported("discrete observation metric on a continuous emission family".into()));
    }
    let s = params.states();
    let ys = observation_grid(&params.emission, plan)?;
    let pairs = observation_pairs(&ys, branch);
    let lattice = simplex_lattice(s, plan.simplex_resolution);
    let moves = directions(s);
    let h = plan.step;

    let log_g: Vec<Vec<f64>> = ys
        .iter()
        .map(|&y| {
            let mut row = vec![0.0; s];
            params.emission.log_densities_into(y, &mut row);
            row
        })
        .collect();

    let (mut delta_1, mut l_y, mut l_p) = (0.0f64, 0.0f64, 0.0f64);
    let mut next_a = vec![0.0; s];
    let mut next_b = vec![0.0; s];
    for p in &lattice {
        for &(i, j) in &pairs {
            let d = branch.metric(ys[i], ys[j]);
            step_into(&params, p, &log_g[i], &mut next_a);
            step_into(&params, p, &log_g[j], &mut next_b);
            delta_1 = delta_1.max(tv_distance(&next_a, &next_b) / d);
            l_y = l_y.max((mix_log_density(p, &log_g[i]) - mix_log_density(p, &log_g[j])).abs() / d);
        }
        for (from, to) in &moves {
            let Some(q) = perturb(p, *from, *to, h) else { continue };
            for lg in &log_g {
                l_p = l_p.max((mix_log_density(p, lg) - mix_log_density(&q, lg)).abs() / h);
            }
        }
    }

    let mut per_lag = lag_quotients(&params, horizon, plan, &ys, &lattice, &moves);
    let noise = NOISE_MULTIPLE * f64::EPSILON / h;
    // once a lag sinks into the noise, later lags carry no signal either
    if let Some(first) = per_lag.iter().position(|q| *q <= noise) {
        per_lag[first..].fill(0.0);
    }
    let delta_2_truncated: f64 = per_lag.iter().sum();
    let (decay_ratio, delta_2_tail) = extrapolate(&per_lag);
    let l_lip = 2.0 * l_y.max(l_p);
    Ok(LipschitzEstimates {
        branch,
        horizon,
        delta_1,
        delta_2: delta_2_truncated + delta_2_tail,
        per_lag,
        delta_2_truncated,
        decay_ratio,
        delta_2_tail,
        l_y,
        l_p,
        l_lip,
        y_grid_points: ys.len(),
        simplex_points: lattice.len(),
        plan: plan.clone(),
    })
}

/// Sup over sampled sequences, lattice points and local moves of
/// `TV(f_t(y, p), f_t(y, p')) / TV(p, p')` for each lag `t`.
fn lag_quotients(
    params: &HmmParams,
    horizon: usize,
    plan: &SamplingPlan,
    ys: &[f64],
    lattice: &[Vec<f64>],
    moves: &[(usize, usize)],
) -> Vec<f64> {
    let s = params.states();
    let len = horizon + 1;
    let mut sequences = Vec::with_capacity(plan.sequences);
    for k in 0..plan.sequences {
        let mut rng = stream(plan.seed, &[label::LIPSCHITZ, k as u64]);
        let seq = if k % 2 == 0 {
            params.simulate_observations(len, &mut rng)
        } else {
            (0..len).map(|_| ys[rng.random_range(0..ys.len())]).collect()
        };
        sequences.push(seq);
    }

    let mut per_lag = vec![0.0f64; len];
    let mut lg = vec![0.0; s];
    let mut a = vec![0.0; s];
    let mut b = vec![0.0; s];
    for seq in &sequences {
        for p in lattice {
            for (from, to) in moves {
                let Some(q) = perturb(p, *from, *to, plan.step) else { continue };
                a.copy_from_slice(p);
                b.copy_from_slice(&q);
                for (t, y) in seq.iter().enumerate() {
                    params.emission.log_densities_into(*y, &mut lg);
                    let (na, nb) = (a.clone(), b.clone());
                    if !step_into(params, &na, &lg, &mut a) || !step_into(params, &nb, &lg, &mut b) {
                        break;
                    }
                    per_lag[t] = per_lag[t].max(tv_distance(&a, &b) / plan.step);
                }
            }
        }
    }
    per_lag
}

/// Quotients below this multiple of `EPSILON / step` are rounding noise.
const NOISE_MULTIPLE: f64 = 1e3;

fn extrapolate(per_lag: &[f64]) -> (f64, f64) {
    let live = per_lag.iter().rposition(|q| *q > 0.0).map_or(0, |i| i + 1);
    if live < per_lag.len() || live < 2 {
        return (0.0, 0.0);
    }
    let k = (live - 1).min(5);
    let ratio = (live - k..live).map(|t| per_lag[t] / per_lag[t - 1]).fold(0.0f64, f64::max);
    if ratio >= 1.0 {
        (ratio, f64::INFINITY)
    } else {
        (ratio, per_lag[live - 1] * ratio / (1.0 - ratio))
    }
}

/// One forward step from `p`; returns false when the observation has zero
/// likelihood under every state with mass.
fn step_into(params: &HmmParams, p: &[f64], log_g: &[f64], out: &mut [f64]) -> bool {
    let shift = log_g.iter().zip(p).filter(|(_, w)| **w > 0.0).map(|(g, _)| *g).fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return false;
    }
    out.fill(0.0);
    let total: f64 = p.iter().zip(log_g).map(|(w, g)| if *w > 0.0 { w * (g - shift).exp() } else { 0.0 }).sum();
    for (x, (w, g)) in p.iter().zip(log_g).enumerate() {
        if *w == 0.0 {
            continue;
        }
        let a = w * (g - shift).exp() / total;
        for (o, q) in out.iter_mut().zip(params.transition.row(x)) {
            *o += a * q;
        }
    }
    let norm: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= norm);
    true
}

fn mix_log_density(p: &[f64], log_g: &[f64]) -> f64 {
    let shift = log_g.iter().zip(p).filter(|(_, w)| **w > 0.0).map(|(g, _)| *g).fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    shift + p.iter().zip(log_g).map(|(w, g)| if *w > 0.0 { w * (g - shift).exp() } else { 0.0 }).sum::<f64>().ln()
}

fn observation_grid(emission: &Emission, plan: &SamplingPlan) -> Result<Vec<f64>> {
    match emission {
        Emission::Gaussian { means, sigma, .. } => {
            let lo_mean = means.iter().copied().fold(f64::INFINITY, f64::min);
            let hi_mean = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = plan.y_range.unwrap_or((lo_mean - 4.0 * sigma, hi_mean + 4.0 * sigma));
            if !(lo < hi) {
                return Err(Error::invalid(format!("empty observation range [{lo}, {hi}]")));
            }
            let k = plan.y_points - 1;
            Ok((0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect())
        }
        Emission::Poisson { rates, .. } => {
            let top = rates.iter().copied().fold(0.0, f64::max);
            let (lo, hi) = plan.y_range.unwrap_or((0.0, (top + 6.0 * top.sqrt() + 6.0).ceil()));
            let (lo, hi) = (lo.max(0.0).ceil() as usize, hi.floor() as usize);
            if hi <= lo {
                return Err(Error::invalid("observation range holds fewer than two counts"));
            }
            Ok((lo..=hi).map(|k| k as f64).collect())
        }
        Emission::Categorical { probs, .. } => Ok((0..probs[0].len()).map(|k| k as f64).collect()),
    }
}

/// Neighbouring grid points under `|y - y'|` (enough by the triangle
/// inequality); every pair under the discrete metric.
fn observation_pairs(ys: &[f64], branch: Branch) -> Vec<(usize, usize)> {
    match branch {
        Branch::Continuous => (1..ys.len()).map(|i| (i - 1, i)).collect(),
        Branch::Countable => (0..ys.len()).flat_map(|i| ((i + 1)..ys.len()).map(move |j| (i, j))).collect(),
    }
}

/// All points of the simplex with coordinates in `{0, 1/m, ..., 1}`.
fn simplex_lattice(states: usize, m: usize) -> Vec<Vec<f64>> {
    fn fill(remaining: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k);
            fill(remaining - k, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    fill(m, states, &mut Vec::new(), &mut raw);
    raw.into_iter().map(|c| c.into_iter().map(|k| k as f64 / m as f64).collect()).collect()
}

fn directions(states: usize) -> Vec<(usize, usize)> {
    (0..states).flat_map(|i| (0..states).filter(move |j| *j != i).map(move |j| (i, j))).collect()
}

/// Moves mass `h` from state `from` to state `to`, if available.
fn perturb(p: &[f64], from: usize, to: usize, h: f64) -> Option<Vec<f64>> {
    if p[from] < h {
        return None;
    }
    let mut q = p.to_vec();
    q[from] -= h;
    q[to] += h;
    Some(q)
}
