use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::lipschitz::LipschitzEstimates;
use super::mixing::{mixing_coefficient, MixingReport, MIXING_TOL};
use crate::error::{Error, Result};
use crate::model::{tv_distance, Emission, HmmSpec};

/// Which case of the HMM transportation inequality applies.
///
/// `Countable` uses the discrete metric on observations; `Continuous` uses
/// `|y - y'|` and needs an emission T1 constant plus pairwise W1 distances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Countable,
    Continuous,
}

impl Branch {
    /// The natural branch for an emission family.
    pub fn for_emission(emission: &Emission) -> Branch {
        if emission.is_countable() {
            Branch::Countable
        } else {
            Branch::Continuous
        }
    }

    pub fn metric(self, y: f64, y2: f64) -> f64 {
        match self {
            Branch::Countable => {
                if y == y2 {
                    0.0
                } else {
                    1.0
                }
            }
            Branch::Continuous => (y - y2).abs(),
        }
    }
}

/// `W_1(g(.|a), g(.|b))` under the branch metric.
pub fn emission_wasserstein(emission: &Emission, a: usize, b: usize, branch: Branch) -> f64 {
    match (emission, branch) {
        (Emission::Gaussian { means, .. }, Branch::Continuous) => (means[a] - means[b]).abs(),
        // Poisson laws are stochastically ordered in the rate
        (Emission::Poisson { rates, .. }, Branch::Continuous) => (rates[a] - rates[b]).abs(),
        // symbols sit at 0, 1, ..., m - 1 on the line
        (Emission::Categorical { probs, .. }, Branch::Continuous) => cdf_gap(&probs[a], &probs[b]),
        (Emission::Categorical { probs, .. }, Branch::Countable) => tv_distance(&probs[a], &probs[b]),
        (Emission::Poisson { rates, .. }, Branch::Countable) => poisson_tv(rates[a], rates[b]),
        // an atomless law against another: the discrete metric gives TV
        (Emission::Gaussian { means, sigma, .. }, Branch::Countable) => {
            let z = (means[a] - means[b]).abs() / (2.0 * sigma);
            2.0 * crate::stats::normal_cdf(z) - 1.0
        }
    }
}

fn cdf_gap(p: &[f64], q: &[f64]) -> f64 {
    let (mut fp, mut fq, mut total) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(q).take(p.len() - 1) {
        fp += a;
        fq += b;
        total += (fp - fq).abs();
    }
    total
}

fn poisson_tv(a: f64, b: f64) -> f64 {
    let upper = (a.max(b) + 40.0 * a.max(b).sqrt() + 40.0).ceil() as usize;
    let pmf = |l: f64, k: f64| (k * l.ln() - l - ln_gamma(k + 1.0)).exp();
    0.5 * (0..=upper).map(|k| (pmf(a, k as f64) - pmf(b, k as f64)).abs()).sum::<f64>()
}

/// `C_H` with the pieces it was built from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportConstants {
    pub branch: Branch,
    pub mixing: MixingReport,
    pub d_theta: f64,
    pub c_h: f64,
    pub c_y: Option<f64>,
    pub l_w: Option<f64>,
}

/// `C_H = (D + 1)^2` (countable) or `C_Y + L_w^2 (D + 1)^2` (continuous),
/// with `L_w` the largest pairwise W1 distance between emission laws.
///
/// `c_y` overrides the emission T1 constant; it is required on the
/// continuous branch for families other than the Gaussian.
pub fn t1_constant(spec: &HmmSpec, theta: &[f64], branch: Branch, c_y: Option<f64>) -> Result<TransportConstants> {
    let params = spec.resolve(theta)?;
    let mixing = mixing_coefficient(&params.transition, MIXING_TOL)?;
    let d = mixing.d_theta;
    match branch {
        Branch::Countable => {
            if !params.emission.is_countable() {
                return Err(Error::ConstantsUnavailable("countable branch needs a countable observation space".into()));
            }
            Ok(TransportConstants { branch, d_theta: d, c_h: (d + 1.0).powi(2), c_y: None, l_w: None, mixing })
        }
        Branch::Continuous => {
            let c_y = c_y.or_else(|| params.emission.t1_constant()).ok_or_else(|| {
                Error::ConstantsUnavailable("no emission T1 constant for this family; supply c_y".into())
            })?;
            if !(c_y.is_finite() && c_y >= 0.0) {
                return Err(Error::invalid(format!("c_y must be non-negative, got {c_y}")));
            }
            let s = params.states();
            let mut l_w: f64 = 0.0;
            for a in 0..s {
                for b in (a + 1)..s {
                    l_w = l_w.max(emission_wasserstein(&params.emission, a, b, branch));
                }
            }
            let c_h = c_y + l_w * l_w * (d + 1.0).powi(2);
            Ok(TransportConstants { branch, d_theta: d, c_h, c_y: Some(c_y), l_w: Some(l_w), mixing })
        }
    }
}

/// Every constant entering the concentration bound for log-likelihood ratios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsBundle {
    pub branch: Branch,
    pub d_theta: f64,
    pub c_h: f64,
    pub c_y: Option<f64>,
    pub l_w: Option<f64>,
    pub delta_1: f64,
    pub delta_2: f64,
    pub delta: f64,
    pub l_lip: f64,
    /// `C_H (1 + delta)^4`.
    pub c_e: f64,
    /// `L^2 C_H (1 + delta)^4`.
    pub c_tilde: f64,
}

impl ConstantsBundle {
    pub fn compose(t1: &TransportConstants, lip: &LipschitzEstimates) -> Self {
        Self::from_parts(t1.branch, t1.d_theta, t1.c_h, t1.c_y, t1.l_w, lip.delta_1, lip.delta_2, lip.l_lip)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        branch: Branch,
        d_theta: f64,
        c_h: f64,
        c_y: Option<f64>,
        l_w: Option<f64>,
        delta_1: f64,
        delta_2: f64,
        l_lip: f64,
    ) -> Self {
        let delta = delta_1.max(delta_2);
        let (c_e, c_tilde) = derived(c_h, delta, l_lip);
        Self { branch, d_theta, c_h, c_y, l_w, delta_1, delta_2, delta, l_lip, c_e, c_tilde }
    }

    /// True when the derived constants equal a fresh recomputation bit for bit.
    pub fn recomposes(&self) -> bool {
        let (c_e, c_tilde) = derived(self.c_h, self.delta, self.l_lip);
        c_e == self.c_e && c_tilde == self.c_tilde && self.delta == self.delta_1.max(self.delta_2)
    }

    /// Two-column CSV: `name,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "value"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let branch = match self.branch {
            Branch::Countable => "countable",
            Branch::Continuous => "continuous",
        };
        let rows = [
            ("branch", branch.to_string()),
            ("d_theta", self.d_theta.to_string()),
            ("c_h", self.c_h.to_string()),
            ("c_y", opt(self.c_y)),
            ("l_w", opt(self.l_w)),
            ("delta_1", self.delta_1.to_string()),
            ("delta_2", self.delta_2.to_string()),
            ("delta", self.delta.to_string()),
            ("l_lip", self.l_lip.to_string()),
            ("c_e", self.c_e.to_string()),
            ("c_tilde", self.c_tilde.to_string()),
        ];
        for (k, v) in rows {
            w.write_record([k, v.as_str()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn derived(c_h: f64, delta: f64, l_lip: f64) -> (f64, f64) {
    let growth = (1.0 + delta).powi(4);
    let c_e = c_h * growth;
    (c_e, l_lip * l_lip * c_h * growth)
}
