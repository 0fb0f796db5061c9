use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSpace;
use crate::stats::{normal_cdf, normal_quantile};

/// Prior family on the parameter box.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    #[default]
    Uniform,
    /// Independent Gaussians truncated to the box.
    TruncatedGaussian { mean: Vec<f64>, sd: Vec<f64> },
}

/// A normalized prior density supported on a [`ParamSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Prior {
    spec: PriorSpec,
    space: ParamSpace,
    log_norm: f64,
}

impl Prior {
    pub fn new(spec: PriorSpec, space: ParamSpace) -> Result<Self> {
        let log_norm = match &spec {
            PriorSpec::Uniform => -space.volume().ln(),
            PriorSpec::TruncatedGaussian { mean, sd } => {
                let d = space.dim();
                if mean.len() != d || sd.len() != d {
                    return Err(Error::Dimension { expected: d, got: mean.len().min(sd.len()) });
                }
                if sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::invalid("truncated Gaussian prior needs finite means and positive sds"));
                }
                let mut acc = 0.0;
                for i in 0..d {
                    let mass = normal_cdf((space.upper()[i] - mean[i]) / sd[i])
                        - normal_cdf((space.lower()[i] - mean[i]) / sd[i]);
                    if !(mass > 0.0) {
                        return Err(Error::invalid("truncated Gaussian prior has no mass on the box"));
                    }
                    acc -= mass.ln() + sd[i].ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
                }
                acc
            }
        };
        Ok(Self { spec, space, log_norm })
    }

    pub fn uniform(space: ParamSpace) -> Self {
        Self::new(PriorSpec::Uniform, space).expect("a box has positive volume")
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// `-inf` outside the box.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.dim() || !self.space.contains(theta) {
            return f64::NEG_INFINITY;
        }
        match &self.spec {
            PriorSpec::Uniform => self.log_norm,
            PriorSpec::TruncatedGaussian { mean, sd } => {
                self.log_norm
                    - theta.iter().zip(mean).zip(sd).map(|((t, m), s)| 0.5 * ((t - m) / s).powi(2)).sum::<f64>()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = (self.space.lower(), self.space.upper());
        match &self.spec {
            PriorSpec::Uniform => (0..self.dim()).map(|i| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>()).collect(),
            PriorSpec::TruncatedGaussian { mean, sd } => (0..self.dim())
                .map(|i| {
                    // inverse CDF restricted to the box
                    let a = normal_cdf((lo[i] - mean[i]) / sd[i]);
                    let b = normal_cdf((hi[i] - mean[i]) / sd[i]);
                    let u = a + (b - a) * rng.random::<f64>();
                    (mean[i] + sd[i] * normal_quantile(u.clamp(1e-300, 1.0 - 1e-16))).clamp(lo[i], hi[i])
                })
                .collect(),
        }
    }

    /// Prior mass of `{theta : |theta_i - c_i| <= r_i}` intersected with the box.
    pub fn rectangle_mass(&self, center: &[f64], half_widths: &[f64]) -> f64 {
        let (lo, hi) = (self.space.lower(), self.space.upper());
        (0..self.dim())
            .map(|i| {
                let a = (center[i] - half_widths[i]).max(lo[i]);
                let b = (center[i] + half_widths[i]).min(hi[i]);
                if b <= a {
                    return 0.0;
                }
                match &self.spec {
                    PriorSpec::Uniform => (b - a) / (hi[i] - lo[i]),
                    PriorSpec::TruncatedGaussian { mean, sd } => {
                        let f = |x: f64| normal_cdf((x - mean[i]) / sd[i]);
                        (f(b) - f(a)) / (f(hi[i]) - f(lo[i]))
                    }
                }
            })
            .product()
    }
}
