use serde::Serialize;

use super::asymptotics::{delta_n0, lan_remainder_value, relative_frobenius, score, FisherEstimate};
use super::mcmc::PosteriorRun;
use super::tv::{bvm_tv_distance, TvEstimate};
use crate::error::Result;
use crate::model::HmmSpec;

/// Normal-approximation summary for one data set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BvmDiagnostic {
    pub n: usize,
    /// `l_n'(theta_0)` on the observed data.
    pub score: Vec<f64>,
    pub fisher_score: Vec<Vec<f64>>,
    pub fisher_hessian: Vec<Vec<f64>>,
    pub fisher_gap: f64,
    /// Computed from `fisher_hessian`.
    pub delta_n0: Vec<f64>,
    /// `|I Delta sqrt(n) - score|`.
    pub identity_residual: f64,
    /// Largest absolute LAN remainder over the `h` grid on this data set.
    pub lan_remainder: Option<f64>,
    pub tv: Option<TvEstimate>,
}

pub fn bvm_diagnostic(
    spec: &HmmSpec,
    theta0: &[f64],
    ys: &[f64],
    fisher: &FisherEstimate,
    h_grid: &[Vec<f64>],
    run: Option<&PosteriorRun>,
) -> Result<BvmDiagnostic> {
    let n = ys.len();
    let s = score(spec, theta0, ys)?;
    let (delta, identity_residual) = delta_n0(&fisher.neg_hessian, &s, n)?;
    let mut lan: Option<f64> = None;
    for h in h_grid {
        let moved: Vec<f64> = theta0.iter().zip(h).map(|(t, v)| t + v / (n as f64).sqrt()).collect();
        if !spec.space().contains(&moved) {
            continue;
        }
        let r = lan_remainder_value(spec, theta0, &fisher.neg_hessian, h, ys)?.abs();
        lan = Some(lan.map_or(r, |m| m.max(r)));
    }
    let tv = match run {
        Some(run) => Some(bvm_tv_distance(run, &delta, &fisher.neg_hessian, theta0, theta0.len() > 2)?),
        None => None,
    };
    Ok(BvmDiagnostic {
        n,
        score: s,
        fisher_score: fisher.score_covariance.clone(),
        fisher_hessian: fisher.neg_hessian.clone(),
        fisher_gap: relative_frobenius(&fisher.score_covariance, &fisher.neg_hessian),
        delta_n0: delta,
        identity_residual,
        lan_remainder: lan,
        tv,
    })
}
