use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::prior::Prior;
use crate::error::{Error, Result};
use crate::model::{euclidean, EmissionSpec, HmmParams, HmmSpec};
use crate::rng::{label, stream};
use crate::stats::{binomial_se, mean, std_error};

/// Monte Carlo `K = E_0[log(p_0 / p_theta)]` and
/// `V_k = E_0|log(p_0 / p_theta) - K|^k` for paths of length `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KlMoments {
    pub n: usize,
    pub k: f64,
    pub replicates: usize,
    pub kl: f64,
    pub kl_se: f64,
    pub v_k: f64,
    pub v_k_se: f64,
}

pub fn kl_moments(
    spec: &HmmSpec,
    theta0: &[f64],
    theta: &[f64],
    n: usize,
    replicates: usize,
    k: f64,
    seed: u64,
) -> Result<KlMoments> {
    if !(k > 1.0) {
        return Err(Error::invalid(format!("moment order k must exceed 1, got {k}")));
    }
    if n == 0 || replicates == 0 {
        return Err(Error::invalid("KL moments need n >= 1 and at least one replicate"));
    }
    let p0 = spec.resolve_in_space(theta0)?;
    let p = spec.resolve_in_space(theta)?;
    if theta0 == theta {
        return Ok(KlMoments { n, k, replicates, kl: 0.0, kl_se: 0.0, v_k: 0.0, v_k_se: 0.0 });
    }
    let ratios: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[label::KL, r as u64]);
            let ys = p0.simulate_observations(n, &mut rng);
            Ok(p0.log_likelihood(&ys)? - p.log_likelihood(&ys)?)
        })
        .collect::<Result<_>>()?;
    Ok(moments_from_ratios(&ratios, n, k))
}

fn moments_from_ratios(ratios: &[f64], n: usize, k: f64) -> KlMoments {
    let kl = mean(ratios);
    let dev: Vec<f64> = ratios.iter().map(|l| (l - kl).abs().powf(k)).collect();
    KlMoments { n, k, replicates: ratios.len(), kl, kl_se: std_error(ratios), v_k: mean(&dev), v_k_se: std_error(&dev) }
}

/// `E|Z|^k` for a standard normal `Z`.
pub fn normal_abs_moment(k: f64) -> f64 {
    (0.5 * k * 2f64.ln() + ln_gamma((k + 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln()).exp()
}

/// Radius of `B_n(theta_0, eps; k)` for the single-state Gaussian-mean family:
/// `K = n d^2 / (2 s^2)` and `V_k = E|Z|^k (sqrt(n) d / s)^k` give
/// `d <= eps s min(sqrt 2, E|Z|^k ^(-1/k))`.
pub fn iid_gaussian_bn_radius(eps: f64, sigma: f64, k: f64) -> f64 {
    eps * sigma * std::f64::consts::SQRT_2.min(normal_abs_moment(k).powf(-1.0 / k))
}

/// How membership of `B_n` is decided for each prior draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BnMembership {
    /// Moments estimated on `replicates` shared paths simulated under `theta_0`.
    MonteCarlo { replicates: usize },
    /// Closed-form moments of the single-state Gaussian-mean family.
    IidGaussian { sigma: f64 },
}

impl BnMembership {
    /// Closed form when available, otherwise Monte Carlo.
    pub fn for_spec(spec: &HmmSpec, replicates: usize) -> Self {
        match spec.emission_spec() {
            EmissionSpec::GaussianMean { sigma } if spec.states() == 1 => BnMembership::IidGaussian { sigma: *sigma },
            _ => BnMembership::MonteCarlo { replicates },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriorMassRow {
    pub j: usize,
    pub annulus_mass: f64,
    pub annulus_se: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    /// `exp(K n eps^2 j^2 / 2)`.
    pub bound: f64,
    pub passed: bool,
    /// Smallest `K` for which this row would pass.
    pub k_required: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriorMassReport {
    pub eps: f64,
    pub n: usize,
    pub k: f64,
    pub k_const: f64,
    pub samples: usize,
    pub membership: BnMembership,
    pub b_n_mass: f64,
    pub b_n_se: f64,
    pub rows: Vec<PriorMassRow>,
}

impl PriorMassReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// Settings for [`check_prior_mass`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorMassPlan {
    pub n: usize,
    pub eps: f64,
    pub k: f64,
    pub k_const: f64,
    pub j_grid: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

/// Compares `Pi(annulus_j) / Pi(B_n)` with `exp(K n eps^2 j^2 / 2)` using
/// prior draws.
pub fn check_prior_mass(
    spec: &HmmSpec,
    prior: &Prior,
    theta0: &[f64],
    plan: &PriorMassPlan,
    membership: BnMembership,
) -> Result<PriorMassReport> {
    let PriorMassPlan { n, eps, k, k_const, ref j_grid, samples, seed } = *plan;
    if !(eps > 0.0 && k_const > 0.0) || !(k > 1.0) || n == 0 || samples == 0 {
        return Err(Error::invalid("prior mass check needs eps > 0, K > 0, k > 1, n >= 1 and samples"));
    }
    spec.space().check(theta0)?;
    let mut rng = stream(seed, &[label::PRIOR]);
    let draws: Vec<Vec<f64>> = (0..samples).map(|_| prior.sample(&mut rng)).collect();

    let kl_cap = n as f64 * eps * eps;
    let v_cap = (n as f64).powf(k / 2.0) * eps.powf(k);
    let in_bn: Vec<bool> = match membership {
        BnMembership::IidGaussian { sigma } => {
            let c_k = normal_abs_moment(k);
            draws
                .iter()
                .map(|t| {
                    let d = euclidean(t, theta0) / sigma;
                    let kl = n as f64 * d * d / 2.0;
                    let v = c_k * ((n as f64).sqrt() * d).powf(k);
                    kl <= kl_cap && v <= v_cap
                })
                .collect()
        }
        BnMembership::MonteCarlo { replicates } => {
            if replicates < 2 {
                return Err(Error::invalid("Monte Carlo membership needs at least two replicates"));
            }
            let p0 = spec.resolve(theta0)?;
            let paths: Vec<(Vec<f64>, f64)> = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream(seed, &[label::KL, r as u64]);
                    let ys = p0.simulate_observations(n, &mut rng);
                    let l0 = p0.log_likelihood(&ys)?;
                    Ok((ys, l0))
                })
                .collect::<Result<_>>()?;
            draws
                .par_iter()
                .map(|t| {
                    if t.as_slice() == theta0 {
                        return Ok(true);
                    }
                    let p: HmmParams = spec.resolve(t)?;
                    let ratios: Vec<f64> =
                        paths.iter().map(|(ys, l0)| Ok(l0 - p.log_likelihood(ys)?)).collect::<Result<_>>()?;
                    let m = moments_from_ratios(&ratios, n, k);
                    Ok(m.kl <= kl_cap && m.v_k <= v_cap)
                })
                .collect::<Result<_>>()?
        }
    };
    let bn_count = in_bn.iter().filter(|b| **b).count();
    if bn_count == 0 {
        return Err(Error::UnresolvedPriorMass);
    }
    let m = samples as f64;
    let b_n_mass = bn_count as f64 / m;
    let b_n_se = binomial_se(b_n_mass, samples);
    let ne2 = n as f64 * eps * eps;
    let rows = j_grid
        .iter()
        .map(|&j| {
            let lo = j as f64 * eps;
            let count = draws
                .iter()
                .filter(|t| {
                    let r = euclidean(t, theta0);
                    r > lo && r <= 2.0 * lo
                })
                .count();
            let annulus_mass = count as f64 / m;
            let annulus_se = binomial_se(annulus_mass, samples);
            let ratio = annulus_mass / b_n_mass;
            let ratio_se = if count == 0 {
                0.0
            } else {
                ratio * ((annulus_se / annulus_mass).powi(2) + (b_n_se / b_n_mass).powi(2)).sqrt()
            };
            let jj = (j * j) as f64;
            let bound = (k_const * ne2 * jj / 2.0).exp();
            let k_required = if ratio > 0.0 { (2.0 * ratio.ln() / (ne2 * jj)).max(0.0) } else { 0.0 };
            PriorMassRow { j, annulus_mass, annulus_se, ratio, ratio_se, bound, passed: ratio <= bound, k_required }
        })
        .collect();
    Ok(PriorMassReport { eps, n, k, k_const, samples, membership, b_n_mass, b_n_se, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamSpace;

    fn iid() -> HmmSpec {
        HmmSpec::iid_gaussian(1.0, ParamSpace::new(vec![-1.0], vec![1.0]).unwrap()).unwrap()
    }

    #[test]
    fn abs_moments() {
        assert!((normal_abs_moment(2.0) - 1.0).abs() < 1e-12);
        assert!((normal_abs_moment(1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((normal_abs_moment(4.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn equal_points_are_exact_zero() {
        let m = kl_moments(&iid(), &[0.2], &[0.2], 100, 10, 2.0, 1).unwrap();
        assert_eq!((m.kl, m.v_k, m.kl_se), (0.0, 0.0, 0.0));
        assert!(kl_moments(&iid(), &[0.2], &[0.2], 100, 10, 1.0, 1).is_err());
    }

    #[test]
    fn gaussian_kl_matches_closed_form() {
        let n = 200;
        let m = kl_moments(&iid(), &[0.0], &[0.3], n, 400, 2.0, 9).unwrap();
        let exact = n as f64 * 0.09 / 2.0;
        assert!((m.kl - exact).abs() < 3.0 * m.kl_se, "{} vs {exact}", m.kl);
        // V_2 is the variance n d^2
        assert!((m.v_k / (n as f64 * 0.09) - 1.0).abs() < 0.2);
    }

    #[test]
    fn uniform_prior_bn_mass_matches_interval() {
        let spec = iid();
        let prior = Prior::uniform(spec.space().clone());
        let plan =
            PriorMassPlan { n: 100, eps: 0.1, k: 2.0, k_const: 1.0, j_grid: vec![1, 2, 20], samples: 40_000, seed: 4 };
        let rep = check_prior_mass(&spec, &prior, &[0.0], &plan, BnMembership::IidGaussian { sigma: 1.0 }).unwrap();
        let exact = prior.rectangle_mass(&[0.0], &[iid_gaussian_bn_radius(0.1, 1.0, 2.0)]);
        assert!((rep.b_n_mass - exact).abs() < 3.0 * rep.b_n_se);
        assert_eq!(rep.rows[2].annulus_mass, 0.0);
        assert!(rep.rows[2].passed);
    }

    #[test]
    fn concentrated_prior_passes() {
        let spec = iid();
        let prior = Prior::new(
            super::super::prior::PriorSpec::TruncatedGaussian { mean: vec![0.0], sd: vec![1e-4] },
            spec.space().clone(),
        )
        .unwrap();
        let plan = PriorMassPlan { n: 100, eps: 0.1, k: 2.0, k_const: 1.0, j_grid: vec![1, 2], samples: 2000, seed: 4 };
        let rep = check_prior_mass(&spec, &prior, &[0.0], &plan, BnMembership::MonteCarlo { replicates: 50 }).unwrap();
        assert!(rep.rows.iter().all(|r| r.ratio == 0.0 && r.passed));
    }
}
