use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_quantile};

/// A law on the real line.
#[derive(Clone, Debug, PartialEq)]
pub enum Distribution1d {
    /// Empirical law of the samples (kept sorted).
    Samples(Vec<f64>),
    Gaussian {
        mean: f64,
        sd: f64,
    },
    PointMass(f64),
}

impl Distribution1d {
    pub fn samples(mut xs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("samples must be finite and non-empty"));
        }
        xs.sort_by(f64::total_cmp);
        Ok(Distribution1d::Samples(xs))
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
            return Err(Error::invalid(format!("invalid gaussian N({mean}, {sd}^2)")));
        }
        Ok(Distribution1d::Gaussian { mean, sd })
    }

    /// Empirical law of points given as coordinate vectors; only
    /// one-dimensional points are supported.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.len() != 1) {
            return Err(Error::Unsupported(format!("wasserstein distance in dimension {}", p.len())));
        }
        Self::samples(points.iter().map(|p| p[0]).collect())
    }
}

/// `W_1(a, b) = int_0^1 |F_a^{-1}(u) - F_b^{-1}(u)| du`.
pub fn wasserstein_1d(a: &Distribution1d, b: &Distribution1d) -> f64 {
    use Distribution1d::*;
    match (a, b) {
        (PointMass(x), PointMass(y)) => (x - y).abs(),
        (Gaussian { mean: m1, sd: s1 }, Gaussian { mean: m2, sd: s2 }) => folded_normal_mean(m1 - m2, s1 - s2),
        (PointMass(c), Gaussian { mean, sd }) | (Gaussian { mean, sd }, PointMass(c)) => {
            folded_normal_mean(c - mean, *sd)
        }
        (Samples(xs), PointMass(c)) | (PointMass(c), Samples(xs)) => {
            xs.iter().map(|x| (x - c).abs()).sum::<f64>() / xs.len() as f64
        }
        (Samples(xs), Samples(ys)) if xs.len() == ys.len() => {
            xs.iter().zip(ys).map(|(x, y)| (x - y).abs()).sum::<f64>() / xs.len() as f64
        }
        (Samples(xs), Samples(ys)) => empirical_cdf_gap(xs, ys),
        (Samples(xs), Gaussian { mean, sd }) | (Gaussian { mean, sd }, Samples(xs)) => {
            samples_vs_gaussian(xs, *mean, *sd)
        }
    }
}

/// `E|m + s Z|` for standard normal `Z`.
fn folded_normal_mean(m: f64, s: f64) -> f64 {
    let s = s.abs();
    if s == 0.0 {
        return m.abs();
    }
    let z = m / s;
    s * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp() + m * (1.0 - 2.0 * normal_cdf(-z))
}

/// `int |F_a - F_b| dx` for two empirical laws.
fn empirical_cdf_gap(xs: &[f64], ys: &[f64]) -> f64 {
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut prev = xs[0].min(ys[0]);
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        prev = next;
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
    }
    total
}

fn phi(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// Quantile coupling of the sorted samples with `N(mean, sd^2)`: the `i`-th
/// order statistic is paired with the normal quantiles on `((i-1)/n, i/n)`.
fn samples_vs_gaussian(xs: &[f64], mean: f64, sd: f64) -> f64 {
    let n = xs.len();
    // antiderivative of (c - z) phi(z)
    let g = |c: f64, z: f64| c * normal_cdf(z) + phi(z);
    let mut total = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let lo = if i == 0 { f64::NEG_INFINITY } else { normal_quantile(i as f64 / n as f64) };
        let hi = if i + 1 == n { f64::INFINITY } else { normal_quantile((i + 1) as f64 / n as f64) };
        let c = (x - mean) / sd;
        let piece = if c <= lo {
            g(c, lo) - g(c, hi)
        } else if c >= hi {
            g(c, hi) - g(c, lo)
        } else {
            2.0 * g(c, c) - g(c, lo) - g(c, hi)
        };
        total += sd * piece;
    }
    total
}
