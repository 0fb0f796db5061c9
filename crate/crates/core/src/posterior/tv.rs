use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::mcmc::PosteriorRun;
use crate::error::{Error, Result};
use crate::stats::{normal_cdf, quantile_sorted};

/// Histogram estimate of the total-variation distance to a normal law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvEstimate {
    pub tv: f64,
    /// Expected value of the estimator when the samples are independent draws
    /// from the normal itself, for the same bins.
    pub noise_floor: f64,
    pub bins: Vec<usize>,
    pub samples: usize,
    /// Worst one-dimensional projection in `d > 2`; a lower bound on the full TV.
    pub lower_bound: bool,
}

/// Freedman-Diaconis-type bins on whitened coordinates, widths
/// `2 IQR m^(-1/(d+2))`.
fn bins_for(col: &mut [f64], m: usize, d: usize) -> (f64, f64, usize) {
    col.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(col, 0.75) - quantile_sorted(col, 0.25);
    let lo = col[0];
    let hi = col[col.len() - 1];
    let mut w = 2.0 * iqr * (m as f64).powf(-1.0 / (d as f64 + 2.0));
    if !(w > 0.0) {
        w = (hi - lo).max(1e-12);
    }
    let k = (((hi - lo) / w).ceil() as usize).clamp(1, 10_000);
    (lo, (hi - lo).max(1e-12) / k as f64, k)
}

fn cell_prob(lo: f64, w: f64, k: usize) -> Vec<f64> {
    (0..k).map(|b| normal_cdf(lo + (b + 1) as f64 * w) - normal_cdf(lo + b as f64 * w)).collect()
}

fn index(x: f64, lo: f64, w: f64, k: usize) -> usize {
    (((x - lo) / w).floor().max(0.0) as usize).min(k - 1)
}

/// TV between the empirical law of whitened samples (target `N(0, I_d)`),
/// `d <= 2`.
fn tv_whitened(z: &[Vec<f64>]) -> TvEstimate {
    let m = z.len();
    let d = z[0].len();
    let axes: Vec<(f64, f64, usize)> = (0..d)
        .map(|i| {
            let mut col: Vec<f64> = z.iter().map(|v| v[i]).collect();
            bins_for(&mut col, m, d)
        })
        .collect();
    let probs: Vec<Vec<f64>> = axes.iter().map(|&(lo, w, k)| cell_prob(lo, w, k)).collect();
    let cells: usize = axes.iter().map(|a| a.2).product();
    let mut counts = vec![0usize; cells];
    for v in z {
        let mut idx = 0;
        for (i, &(lo, w, k)) in axes.iter().enumerate() {
            idx = idx * k + index(v[i], lo, w, k);
        }
        counts[idx] += 1;
    }
    let mut tv = 0.0;
    let mut covered = 0.0;
    let mut floor = 0.0;
    for (c, &count) in counts.iter().enumerate() {
        let mut rest = c;
        let mut p = 1.0;
        for i in (0..d).rev() {
            let k = axes[i].2;
            p *= probs[i][rest % k];
            rest /= k;
        }
        covered += p;
        tv += (count as f64 / m as f64 - p).abs();
        floor += (2.0 * p * (1.0 - p) / (std::f64::consts::PI * m as f64)).sqrt();
    }
    // normal mass outside the histogram range has no samples
    let outside = (1.0 - covered).max(0.0);
    TvEstimate {
        tv: 0.5 * (tv + outside),
        noise_floor: 0.5 * (floor + outside),
        bins: axes.iter().map(|a| a.2).collect(),
        samples: m,
        lower_bound: false,
    }
}

/// TV between the samples and `N(mean, cov)`.
///
/// Samples are whitened by the Cholesky factor of `cov`, which leaves TV
/// unchanged. Dimensions above two need `project`, which returns the worst
/// whitened coordinate as a lower bound.
pub fn tv_to_normal(samples: &[Vec<f64>], mean: &[f64], cov: &[Vec<f64>], project: bool) -> Result<TvEstimate> {
    let d = mean.len();
    if samples.len() < 10 {
        return Err(Error::invalid("TV estimate needs at least ten samples"));
    }
    if samples.iter().any(|s| s.len() != d) || cov.len() != d {
        return Err(Error::Dimension { expected: d, got: samples[0].len() });
    }
    if d > 2 && !project {
        return Err(Error::Unsupported(format!("histogram TV in dimension {d}; enable projection")));
    }
    let c = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let chol = c.cholesky().ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN, condition: f64::NAN })?;
    let l = chol.l();
    let mu = DVector::from_column_slice(mean);
    let z: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let x = DVector::from_column_slice(s) - &mu;
            let w = l.solve_lower_triangular(&x).expect("Cholesky factor is invertible");
            w.iter().copied().collect()
        })
        .collect();
    if d <= 2 {
        return Ok(tv_whitened(&z));
    }
    let mut worst: Option<TvEstimate> = None;
    for i in 0..d {
        let col: Vec<Vec<f64>> = z.iter().map(|v| vec![v[i]]).collect();
        let est = tv_whitened(&col);
        if worst.as_ref().is_none_or(|w| est.tv > w.tv) {
            worst = Some(est);
        }
    }
    let mut w = worst.expect("d > 2");
    w.lower_bound = true;
    Ok(w)
}

/// TV between the law of `h = sqrt(n)(theta - theta_0)` under the draws and
/// `N(delta_n0, I^{-1})`.
pub fn bvm_tv_distance(
    run: &PosteriorRun,
    delta_n0: &[f64],
    fisher: &[Vec<f64>],
    theta0: &[f64],
    project: bool,
) -> Result<TvEstimate> {
    let d = theta0.len();
    let sqrt_n = (run.n as f64).sqrt();
    let h: Vec<Vec<f64>> =
        run.samples.iter().map(|s| s.iter().zip(theta0).map(|(t, t0)| sqrt_n * (t - t0)).collect()).collect();
    let i = DMatrix::from_fn(d, d, |a, b| fisher[a][b]);
    let inv = i.try_inverse().ok_or_else(|| Error::Numeric("Fisher information is singular".into()))?;
    let cov: Vec<Vec<f64>> = (0..d).map(|a| (0..d).map(|b| 0.5 * (inv[(a, b)] + inv[(b, a)])).collect()).collect();
    tv_to_normal(&h, delta_n0, &cov, project)
}
