use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covering::{annulus_meets_space, CoverStrategy};
use super::divergence::DivergenceSource;
use super::tests::{build_composite_test, PreparedTest, TestFunction};
use crate::error::{Error, Result};
use crate::model::{HmmSpec, ParamSpace};
use crate::rng::{label, stream};
use crate::stats::{binomial_se, linear_fit, LinearFit};

/// `eps_n = c n^(-alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsSchedule {
    pub c: f64,
    pub alpha: f64,
}

impl EpsSchedule {
    pub fn root_n(c: f64) -> Self {
        Self { c, alpha: 0.5 }
    }

    pub fn eps(&self, n: usize) -> f64 {
        self.c * (n as f64).powf(-self.alpha)
    }
}

/// Rate in `exp(-c n eps^2 j^2)`:
/// `min{81 k2^2 / (256 C), (9 k1 / 16 - k2 / 5)^2 / (4 C)}`.
pub fn rate_constant(kappa_1: f64, kappa_2: f64, c_tilde: f64) -> f64 {
    let a = 81.0 * kappa_2 * kappa_2 / (256.0 * c_tilde);
    let b = (9.0 * kappa_1 / 16.0 - kappa_2 / 5.0).powi(2) / (4.0 * c_tilde);
    a.min(b)
}

/// Type I bound of the composite test.
pub fn composite_type1_bound(rate: f64, n: usize, eps: f64, m: usize, max_cover: usize) -> f64 {
    let ne2 = n as f64 * eps * eps;
    max_cover as f64 / (1.0 - (-rate * ne2).exp()) * (-(rate * ne2 * (m * m) as f64)).exp()
}

/// Type II bound of the composite test on annulus `j`.
pub fn composite_type2_bound(rate: f64, n: usize, eps: f64, j: usize) -> f64 {
    2.0 * (-(rate * n as f64 * eps * eps * (j * j) as f64)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub se: f64,
    pub replicates: usize,
}

/// Fraction of paths simulated under `theta` on which the test rejects.
/// Replicate `r` uses the stream `[TESTS, tag..., r]`.
#[allow(clippy::too_many_arguments)]
pub fn rejection_rate(
    spec: &HmmSpec,
    test: &TestFunction,
    prepared: &PreparedTest,
    theta: &[f64],
    n: usize,
    replicates: usize,
    seed: u64,
    tag: &[u64],
) -> Result<RateEstimate> {
    if n == 0 || replicates == 0 {
        return Err(Error::invalid("rejection rate needs n >= 1 and at least one replicate"));
    }
    let params = spec.resolve_in_space(theta)?;
    let order = prepared.order_by_distance(test, theta);
    let hits: usize = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut path = vec![label::TESTS];
            path.extend_from_slice(tag);
            path.push(r as u64);
            let mut rng = stream(seed, &path);
            let ys = params.simulate_observations(n, &mut rng);
            prepared.decide_in_order(&ys, order.iter().copied()).map(usize::from)
        })
        .sum::<Result<usize>>()?;
    let rate = hits as f64 / replicates as f64;
    Ok(RateEstimate { rate, se: binomial_se(rate, replicates), replicates })
}

/// Points at distance `f j eps` from `theta0` along the coordinate axes and
/// the main diagonals, for each factor `f`, kept if inside `space`.
pub fn annulus_alternatives(theta0: &[f64], radius: f64, factors: &[f64], space: &ParamSpace) -> Vec<Vec<f64>> {
    let d = theta0.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[i] = s;
            dirs.push(v);
        }
    }
    if (2..=6).contains(&d) {
        let scale = 1.0 / (d as f64).sqrt();
        for mask in 0..(1u32 << d) {
            dirs.push((0..d).map(|i| if mask >> i & 1 == 1 { -scale } else { scale }).collect());
        }
    }
    let mut out = Vec::new();
    for f in factors {
        for dir in &dirs {
            let p: Vec<f64> = theta0.iter().zip(dir).map(|(t, u)| t + f * radius * u).collect();
            if space.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// Settings for [`verify_testing_condition`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestingPlan {
    pub theta0: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub j_grid: Vec<usize>,
    pub eps: EpsSchedule,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Replicates per alternative for Type II.
    pub replicates: usize,
    /// Replicates under `theta0` for Type I.
    pub type1_replicates: usize,
    /// Alternatives sit at `f j eps` for each factor `f` in `(1, 2]`.
    #[serde(default = "default_factors")]
    pub radius_factors: Vec<f64>,
    #[serde(default)]
    pub strategy: CoverStrategy,
    pub seed: u64,
}

fn default_m() -> usize {
    1
}

fn default_xi() -> f64 {
    0.25
}

fn default_factors() -> Vec<f64> {
    vec![1.05, 1.5]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRateRow {
    pub n: usize,
    pub eps: f64,
    pub j: usize,
    /// Members of the composite test at this `n`.
    pub members: usize,
    pub alternatives: usize,
    pub type1: f64,
    pub type1_se: f64,
    /// Worst Type II over the alternatives.
    pub type2: f64,
    pub type2_se: f64,
    pub worst_alternative: Option<Vec<f64>>,
    pub bound1: Option<f64>,
    pub bound2: Option<f64>,
    /// No alternative of annulus `j` lies inside the box.
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub j: usize,
    pub fit: LinearFit,
    /// Upper end of the 95% interval for the slope is below zero.
    pub negative_95: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRateReport {
    pub rows: Vec<ErrorRateRow>,
    pub replicates: usize,
    pub type1_replicates: usize,
    pub rate_constant: Option<f64>,
    /// `ln type2` against `n` at each fixed `j`.
    pub slopes: Vec<SlopeFit>,
    /// `ln type2` against `n eps^2 j^2` over every row with a positive rate.
    pub pooled: Option<LinearFit>,
    /// Smallest `n` from which every row sits under its bounds plus 3 s.e.
    pub domination_from_n: Option<usize>,
}

impl ErrorRateReport {
    pub fn n_grid(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        ns.dedup();
        ns
    }

    pub fn rows_for_j(&self, j: usize) -> impl Iterator<Item = &ErrorRateRow> {
        self.rows.iter().filter(move |r| r.j == j)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n",
            "eps",
            "j",
            "members",
            "alternatives",
            "type1",
            "type1_se",
            "type2",
            "type2_se",
            "bound1",
            "bound2",
            "skipped",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.eps.to_string(),
                r.j.to_string(),
                r.members.to_string(),
                r.alternatives.to_string(),
                r.type1.to_string(),
                r.type1_se.to_string(),
                r.type2.to_string(),
                r.type2_se.to_string(),
                opt(r.bound1),
                opt(r.bound2),
                r.skipped.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Monte Carlo error rates of the composite test over `n` and `j`.
///
/// `rate` is the constant in `exp(-c n eps^2 j^2)`; bounds are reported only
/// when it is given.
pub fn verify_testing_condition(
    spec: &HmmSpec,
    plan: &TestingPlan,
    source: &dyn DivergenceSource,
    rate: Option<f64>,
) -> Result<ErrorRateReport> {
    if plan.n_grid.is_empty() || plan.j_grid.is_empty() {
        return Err(Error::invalid("testing plan needs non-empty n and j grids"));
    }
    if plan.replicates == 0 || plan.type1_replicates == 0 {
        return Err(Error::invalid("testing plan needs positive replicate counts"));
    }
    if let Some(j) = plan.j_grid.iter().find(|&&j| j < plan.m) {
        return Err(Error::invalid(format!("j = {j} is below M = {}", plan.m)));
    }
    if plan.radius_factors.iter().any(|f| !(*f > 1.0 && *f <= 2.0)) {
        return Err(Error::invalid("radius factors must lie in (1, 2]"));
    }
    let theta0 = plan.theta0.as_slice();
    let mut rows = Vec::new();
    for &n in &plan.n_grid {
        let eps = plan.eps.eps(n);
        let test = build_composite_test(spec, theta0, eps, plan.m, plan.xi, source, plan.strategy)?;
        let prepared = test.prepare(spec)?;
        log::info!("n = {n}: composite test with {} members", test.len());
        let t1 = rejection_rate(spec, &test, &prepared, theta0, n, plan.type1_replicates, plan.seed, &[n as u64, 0])?;
        let mut per_j: BTreeMap<usize, usize> = BTreeMap::new();
        for mbr in &test.members {
            *per_j.entry(mbr.j.unwrap_or(0)).or_default() += 1;
        }
        let max_cover = per_j.values().copied().max().unwrap_or(0);
        let bound1 = rate.map(|c| composite_type1_bound(c, n, eps, plan.m, max_cover));

        for &j in &plan.j_grid {
            let alts = if annulus_meets_space(theta0, eps, j, spec.space()) {
                annulus_alternatives(theta0, j as f64 * eps, &plan.radius_factors, spec.space())
            } else {
                Vec::new()
            };
            let mut worst: Option<(RateEstimate, Vec<f64>)> = None;
            for (k, alt) in alts.iter().enumerate() {
                let rej = rejection_rate(
                    spec,
                    &test,
                    &prepared,
                    alt,
                    n,
                    plan.replicates,
                    plan.seed,
                    &[n as u64, j as u64, k as u64 + 1],
                )?;
                let miss = RateEstimate { rate: 1.0 - rej.rate, ..rej };
                if worst.as_ref().is_none_or(|(w, _)| miss.rate > w.rate) {
                    worst = Some((miss, alt.clone()));
                }
            }
            let skipped = worst.is_none();
            let (type2, type2_se, worst_alternative) = match worst {
                Some((w, a)) => (w.rate, w.se, Some(a)),
                None => (f64::NAN, f64::NAN, None),
            };
            rows.push(ErrorRateRow {
                n,
                eps,
                j,
                members: test.len(),
                alternatives: alts.len(),
                type1: t1.rate,
                type1_se: t1.se,
                type2,
                type2_se,
                worst_alternative,
                bound1,
                bound2: rate.map(|c| composite_type2_bound(c, n, eps, j)),
                skipped,
            });
        }
    }

    let slopes = plan
        .j_grid
        .iter()
        .filter_map(|&j| {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.j == j && !r.skipped && r.type2 > 0.0)
                .map(|r| (r.n as f64, r.type2.ln()))
                .unzip();
            let fit = linear_fit(&x, &y)?;
            let negative_95 = fit.slope_se.is_finite() && fit.slope + 1.96 * fit.slope_se < 0.0;
            Some(SlopeFit { j, fit, negative_95 })
        })
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| !r.skipped && r.type2 > 0.0)
        .map(|r| (r.n as f64 * r.eps * r.eps * (r.j * r.j) as f64, r.type2.ln()))
        .unzip();
    let pooled = linear_fit(&x, &y);

    let domination_from_n = rate.and_then(|_| {
        let ok = |r: &ErrorRateRow| {
            let b1 = r.bound1.unwrap_or(f64::INFINITY);
            let b2 = r.bound2.unwrap_or(f64::INFINITY);
            r.type1 <= b1 + 3.0 * r.type1_se && (r.skipped || r.type2 <= b2 + 3.0 * r.type2_se)
        };
        let mut ns: Vec<usize> = plan.n_grid.clone();
        ns.sort_unstable();
        ns.iter().copied().find(|&n0| rows.iter().filter(|r| r.n >= n0).all(ok))
    });

    Ok(ErrorRateReport {
        rows,
        replicates: plan.replicates,
        type1_replicates: plan.type1_replicates,
        rate_constant: rate,
        slopes,
        pooled,
        domination_from_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::IidGaussianDivergence;

    #[test]
    fn rate_constant_picks_smaller_branch() {
        let c = rate_constant(1.0, 1.5, 2.0);
        let a: f64 = 81.0 * 2.25 / 512.0;
        let b = (0.5625f64 - 0.3).powi(2) / 8.0;
        assert_eq!(c, a.min(b));
    }

    #[test]
    fn alternatives_lie_in_annulus() {
        let space = ParamSpace::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let alts = annulus_alternatives(&[0.0, 0.0], 0.2, &[1.05, 1.5], &space);
        assert_eq!(alts.len(), 16);
        for a in &alts {
            let r = crate::model::euclidean(a, &[0.0, 0.0]);
            assert!(r > 0.2 && r <= 0.4);
        }
    }

    #[test]
    fn iid_gaussian_type_two_shrinks_with_n() {
        let spec = HmmSpec::iid_gaussian(1.0, ParamSpace::new(vec![-0.6], vec![0.6]).unwrap()).unwrap();
        let plan = TestingPlan {
            theta0: vec![0.0],
            n_grid: vec![50, 400],
            j_grid: vec![1],
            eps: EpsSchedule::root_n(1.5),
            m: 1,
            xi: 0.25,
            replicates: 400,
            type1_replicates: 400,
            radius_factors: default_factors(),
            strategy: CoverStrategy::MaxCoverage,
            seed: 11,
        };
        let src = IidGaussianDivergence { sigma: 1.0 };
        let rep = verify_testing_condition(&spec, &plan, &src, None).unwrap();
        assert_eq!(rep.rows.len(), 2);
        for r in &rep.rows {
            assert!((0.0..=1.0).contains(&r.type1) && (0.0..=1.0).contains(&r.type2));
        }
        // eps = 1.5 / sqrt(n) keeps n eps^2 fixed, so rates stay comparable
        assert!(rep.rows[1].members >= rep.rows[0].members);
    }

    #[test]
    fn exited_annulus_is_skipped() {
        let spec = HmmSpec::iid_gaussian(1.0, ParamSpace::new(vec![-0.5], vec![0.5]).unwrap()).unwrap();
        let plan = TestingPlan {
            theta0: vec![0.0],
            n_grid: vec![100],
            j_grid: vec![1, 9],
            eps: EpsSchedule::root_n(1.0),
            m: 1,
            xi: 0.25,
            replicates: 50,
            type1_replicates: 50,
            radius_factors: default_factors(),
            strategy: CoverStrategy::MaxCoverage,
            seed: 2,
        };
        let rep = verify_testing_condition(&spec, &plan, &IidGaussianDivergence { sigma: 1.0 }, Some(0.1)).unwrap();
        assert!(!rep.rows[0].skipped);
        assert!(rep.rows[1].skipped);
    }
}
