use crate::error::{Error, Result};
use crate::stats::{mean, variance};

use super::mcmc::PosteriorRun;

/// Potential scale reduction per coordinate over chains of equal length.
pub fn gelman_rubin(runs: &[PosteriorRun]) -> Result<Vec<f64>> {
    if runs.len() < 2 {
        return Err(Error::invalid("Gelman-Rubin needs at least two chains"));
    }
    let m = runs[0].len();
    if m < 2 || runs.iter().any(|r| r.len() != m || r.dim() != runs[0].dim()) {
        return Err(Error::invalid("chains must share length (>= 2) and dimension"));
    }
    Ok((0..runs[0].dim())
        .map(|i| {
            let cols: Vec<Vec<f64>> = runs.iter().map(|r| r.column(i)).collect();
            let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
            let w = mean(&cols.iter().map(|c| variance(c)).collect::<Vec<_>>());
            let b = m as f64 * variance(&means);
            let var_plus = (m as f64 - 1.0) / m as f64 * w + b / m as f64;
            if w == 0.0 {
                return if b == 0.0 { 1.0 } else { f64::INFINITY };
            }
            (var_plus / w).sqrt()
        })
        .collect())
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let m = xs.len();
    if m < 4 {
        return m as f64;
    }
    let mu = mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / m as f64;
    if c0 == 0.0 {
        return m as f64;
    }
    let acf = |lag: usize| -> f64 {
        xs[..m - lag].iter().zip(&xs[lag..]).map(|(a, b)| (a - mu) * (b - mu)).sum::<f64>() / (m as f64 * c0)
    };
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < m {
        let pair = acf(2 * k) + acf(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    (m as f64 / tau.max(1.0 / m as f64)).min(m as f64)
}

/// Standard error of the mean by non-overlapping batch means with
/// `floor(sqrt(m))` batches.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let m = xs.len();
    let batches = (m as f64).sqrt().floor() as usize;
    if batches < 2 {
        return f64::NAN;
    }
    let size = m / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    (variance(&means) / batches as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_draws_have_full_ess() {
        let mut rng = stream(1, &[2]);
        let xs: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 3000.0, "{ess}");
        let se = batch_means_se(&xs);
        assert!((se / (1.0 / 5000f64.sqrt()) - 1.0).abs() < 0.3);
    }

    #[test]
    fn ar1_ess_matches_theory() {
        let mut rng = stream(1, &[3]);
        let phi: f64 = 0.9;
        let mut x = 0.0;
        let xs: Vec<f64> = (0..50_000)
            .map(|_| {
                x = phi * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let expect = 50_000.0 * (1.0 - phi) / (1.0 + phi);
        let ess = effective_sample_size(&xs);
        assert!((ess / expect - 1.0).abs() < 0.25, "{ess} vs {expect}");
    }
}
