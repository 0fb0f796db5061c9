use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::HmmSpec;
use crate::rng::{label, stream};
use crate::stats::{mean, std_error};

/// Central-difference step for coordinate `i` at sample size `n`.
pub fn fd_step(theta_i: f64, n: usize) -> f64 {
    1e-2 / (n as f64).sqrt() * theta_i.abs().max(1.0)
}

fn check_interior(spec: &HmmSpec, theta0: &[f64], n: usize) -> Result<()> {
    spec.space().check(theta0)?;
    for (i, t) in theta0.iter().enumerate() {
        let h = fd_step(*t, n);
        let margin = (t - spec.space().lower()[i]).min(spec.space().upper()[i] - t);
        if margin < 2.0 * h {
            return Err(Error::invalid(format!(
                "coordinate {i} of {theta0:?} is within two finite-difference steps of the boundary"
            )));
        }
    }
    Ok(())
}

fn shifted(theta: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut t = theta.to_vec();
    for &(i, h) in moves {
        t[i] += h;
    }
    t
}

fn loglik(spec: &HmmSpec, theta: &[f64], ys: &[f64]) -> Result<f64> {
    spec.resolve(theta)?.log_likelihood(ys)
}

fn increments(spec: &HmmSpec, theta: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    spec.resolve(theta)?.log_likelihood_increments(ys)
}

/// Score `l_n'(theta)` by central differences. When the estimates at steps
/// `h` and `h / 2` differ by more than 1%, the Richardson combination
/// `(4 D(h/2) - D(h)) / 3` is returned for that coordinate.
pub fn score(spec: &HmmSpec, theta: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let n = ys.len();
    (0..theta.len())
        .map(|i| {
            let h = fd_step(theta[i], n);
            let d = |h: f64| -> Result<f64> {
                Ok((loglik(spec, &shifted(theta, &[(i, h)]), ys)? - loglik(spec, &shifted(theta, &[(i, -h)]), ys)?)
                    / (2.0 * h))
            };
            let full = d(h)?;
            let half = d(h / 2.0)?;
            let scale = full.abs().max(half.abs());
            Ok(if scale > 0.0 && (full - half).abs() > 0.01 * scale { (4.0 * half - full) / 3.0 } else { full })
        })
        .collect()
}

/// Per-observation score contributions `s_t`, `n x d`, from differences of
/// the log-likelihood increments.
pub fn score_increments(spec: &HmmSpec, theta: &[f64], ys: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = ys.len();
    let d = theta.len();
    let mut out = vec![vec![0.0; d]; n];
    for i in 0..d {
        let h = fd_step(theta[i], n);
        let up = increments(spec, &shifted(theta, &[(i, h)]), ys)?;
        let down = increments(spec, &shifted(theta, &[(i, -h)]), ys)?;
        for t in 0..n {
            out[t][i] = (up[t] - down[t]) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Finite-difference Hessian of `l_n` at `theta`.
pub fn hessian(spec: &HmmSpec, theta: &[f64], ys: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = ys.len();
    let d = theta.len();
    let l0 = loglik(spec, theta, ys)?;
    let hs: Vec<f64> = theta.iter().map(|t| fd_step(*t, n)).collect();
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        let up = loglik(spec, &shifted(theta, &[(i, hs[i])]), ys)?;
        let down = loglik(spec, &shifted(theta, &[(i, -hs[i])]), ys)?;
        out[i][i] = (up - 2.0 * l0 + down) / (hs[i] * hs[i]);
        for j in 0..i {
            let f = |si: f64, sj: f64| loglik(spec, &shifted(theta, &[(i, si * hs[i]), (j, sj * hs[j])]), ys);
            let v = (f(1.0, 1.0)? - f(1.0, -1.0)? - f(-1.0, 1.0)? + f(-1.0, -1.0)?) / (4.0 * hs[i] * hs[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Symmetrizes and checks positive definiteness; returns the eigenvalue range.
pub fn check_positive_definite(m: &[Vec<f64>]) -> Result<(f64, f64)> {
    let a = to_matrix(m);
    let sym = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let lo = eig.min();
    let hi = eig.max();
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo, condition: hi / lo.abs() });
    }
    Ok((lo, hi))
}

/// `|A - B|_F / |B|_F`.
pub fn relative_frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (ma, mb) = (to_matrix(a), to_matrix(b));
    (ma - &mb).norm() / mb.norm()
}

/// Fisher information estimates at `theta_0` from paths simulated under it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FisherEstimate {
    pub n: usize,
    pub replicates: usize,
    /// Mean over paths of `(1/n) sum_t s_t s_t^T`, the summed squares of the
    /// score's martingale differences.
    pub score_covariance: Vec<Vec<f64>>,
    /// Sample covariance of the total scores divided by `n`.
    pub score_covariance_naive: Vec<Vec<f64>>,
    /// Mean of `-(1/n)` times the finite-difference Hessian.
    pub neg_hessian: Vec<Vec<f64>>,
    pub mean_score: Vec<f64>,
    /// `|score_covariance - neg_hessian|_F / |neg_hessian|_F`.
    pub relative_gap: f64,
    pub eigen_range: (f64, f64),
}

pub fn score_and_fisher(
    spec: &HmmSpec,
    theta0: &[f64],
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<FisherEstimate> {
    if n < 2 || replicates < 2 {
        return Err(Error::invalid("Fisher estimates need n >= 2 and at least two replicates"));
    }
    check_interior(spec, theta0, n)?;
    let d = theta0.len();
    let p0 = spec.resolve(theta0)?;
    struct Rep {
        total: Vec<f64>,
        outer: Vec<Vec<f64>>,
        hess: Vec<Vec<f64>>,
    }
    let reps: Vec<Rep> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[label::FISHER, r as u64]);
            let ys = p0.simulate_observations(n, &mut rng);
            let incs = score_increments(spec, theta0, &ys)?;
            let mut total = vec![0.0; d];
            let mut outer = vec![vec![0.0; d]; d];
            for s in &incs {
                for a in 0..d {
                    total[a] += s[a];
                    for b in 0..d {
                        outer[a][b] += s[a] * s[b];
                    }
                }
            }
            Ok(Rep { total, outer, hess: hessian(spec, theta0, &ys)? })
        })
        .collect::<Result<_>>()?;

    let nf = n as f64;
    let m = replicates as f64;
    let mean_score: Vec<f64> = (0..d).map(|a| reps.iter().map(|r| r.total[a]).sum::<f64>() / m).collect();
    let avg = |f: &dyn Fn(&Rep, usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..d).map(|a| (0..d).map(|b| reps.iter().map(|r| f(r, a, b)).sum::<f64>() / m).collect()).collect()
    };
    let score_covariance = avg(&|r, a, b| r.outer[a][b] / nf);
    let neg_hessian = avg(&|r, a, b| -r.hess[a][b] / nf);
    let neg_hessian = from_matrix(&((to_matrix(&neg_hessian) + to_matrix(&neg_hessian).transpose()) * 0.5));
    let score_covariance_naive: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| {
                    reps.iter().map(|r| (r.total[a] - mean_score[a]) * (r.total[b] - mean_score[b])).sum::<f64>()
                        / ((m - 1.0) * nf)
                })
                .collect()
        })
        .collect();
    let eigen_range = check_positive_definite(&score_covariance)?;
    check_positive_definite(&neg_hessian)?;
    Ok(FisherEstimate {
        n,
        replicates,
        relative_gap: relative_frobenius(&score_covariance, &neg_hessian),
        score_covariance,
        score_covariance_naive,
        neg_hessian,
        mean_score,
        eigen_range,
    })
}

/// `Delta_{n,0} = I^{-1} score / sqrt(n)` and the residual
/// `|I Delta sqrt(n) - score|`.
pub fn delta_n0(fisher: &[Vec<f64>], score: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    let d = score.len();
    if fisher.len() != d || fisher.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension { expected: d, got: fisher.len() });
    }
    let i = to_matrix(fisher);
    let s = DVector::from_column_slice(score);
    let rhs = &s / (n as f64).sqrt();
    let delta = i.clone().lu().solve(&rhs).ok_or_else(|| Error::Numeric("Fisher information is singular".into()))?;
    let residual = (&i * &delta * (n as f64).sqrt() - &s).norm();
    Ok((delta.iter().copied().collect(), residual))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LanRow {
    pub n: usize,
    pub h: Vec<f64>,
    pub mean_abs: f64,
    pub se: f64,
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LanReport {
    pub rows: Vec<LanRow>,
    /// `(n, h)` pairs dropped because `theta_0 + h / sqrt(n)` left the box.
    pub trimmed: Vec<(usize, Vec<f64>)>,
}

impl LanReport {
    pub fn row(&self, n: usize, h: &[f64]) -> Option<&LanRow> {
        self.rows.iter().find(|r| r.n == n && r.h == h)
    }
}

/// `[l_n(theta_0 + h/sqrt(n)) - l_n(theta_0)] - [h' score / sqrt(n) - h' I h / 2]`.
pub fn lan_remainder_value(spec: &HmmSpec, theta0: &[f64], fisher: &[Vec<f64>], h: &[f64], ys: &[f64]) -> Result<f64> {
    if h.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let n = ys.len() as f64;
    let moved: Vec<f64> = theta0.iter().zip(h).map(|(t, v)| t + v / n.sqrt()).collect();
    let diff = loglik(spec, &moved, ys)? - loglik(spec, theta0, ys)?;
    let s = score(spec, theta0, ys)?;
    let linear: f64 = h.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / n.sqrt();
    let quad: f64 = (0..h.len()).map(|a| (0..h.len()).map(|b| h[a] * fisher[a][b] * h[b]).sum::<f64>()).sum();
    Ok(diff - (linear - 0.5 * quad))
}

/// Mean absolute LAN remainder per `(n, h)` over paths simulated under
/// `theta_0`. Replicate `r` at `n` uses stream `[LAN, n, r]`, shared across `h`.
pub fn lan_remainder(
    spec: &HmmSpec,
    theta0: &[f64],
    fisher: &[Vec<f64>],
    n_grid: &[usize],
    h_grid: &[Vec<f64>],
    replicates: usize,
    seed: u64,
) -> Result<LanReport> {
    if replicates < 2 {
        return Err(Error::invalid("LAN remainder needs at least two replicates"));
    }
    let p0 = spec.resolve_in_space(theta0)?;
    let mut rows = Vec::new();
    let mut trimmed = Vec::new();
    for &n in n_grid {
        check_interior(spec, theta0, n)?;
        let hs: Vec<&Vec<f64>> = h_grid
            .iter()
            .filter(|h| {
                let moved: Vec<f64> = theta0.iter().zip(h.iter()).map(|(t, v)| t + v / (n as f64).sqrt()).collect();
                let ok = h.len() == theta0.len() && spec.space().contains(&moved);
                if !ok {
                    log::warn!("LAN grid point h = {h:?} leaves the parameter space at n = {n}; trimmed");
                    trimmed.push((n, (*h).clone()));
                }
                ok
            })
            .collect();
        let per_rep: Vec<Vec<f64>> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, &[label::LAN, n as u64, r as u64]);
                let ys = p0.simulate_observations(n, &mut rng);
                hs.iter().map(|h| Ok(lan_remainder_value(spec, theta0, fisher, h, &ys)?.abs())).collect()
            })
            .collect::<Result<_>>()?;
        for (k, h) in hs.iter().enumerate() {
            let vals: Vec<f64> = per_rep.iter().map(|v| v[k]).collect();
            rows.push(LanRow { n, h: (*h).clone(), mean_abs: mean(&vals), se: std_error(&vals), replicates });
        }
    }
    Ok(LanReport { rows, trimmed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamSpace;

    fn iid() -> HmmSpec {
        HmmSpec::iid_gaussian(1.0, ParamSpace::new(vec![-2.0], vec![2.0]).unwrap()).unwrap()
    }

    #[test]
    fn gaussian_score_is_sum_of_residuals() {
        let ys: Vec<f64> = (0..400).map(|i| (i as f64 * 0.7).sin() + 0.1).collect();
        let s = score(&iid(), &[0.2], &ys).unwrap();
        let exact: f64 = ys.iter().map(|y| y - 0.2).sum();
        assert!((s[0] - exact).abs() < 1e-6, "{} vs {exact}", s[0]);
        // score vanishes at the sample mean
        let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
        assert!(score(&iid(), &[ybar], &ys).unwrap()[0].abs() < 1e-6);
    }

    #[test]
    fn gaussian_fisher_is_one() {
        let f = score_and_fisher(&iid(), &[0.0], 500, 200, 3).unwrap();
        assert!((f.neg_hessian[0][0] - 1.0).abs() < 1e-5);
        assert!((f.score_covariance[0][0] - 1.0).abs() < 0.02);
        assert!((f.score_covariance_naive[0][0] - 1.0).abs() < 0.3);
    }

    #[test]
    fn delta_identity_holds() {
        let fisher = vec![vec![2.0, 0.3], vec![0.3, 1.0]];
        let (delta, res) = delta_n0(&fisher, &[1.5, -0.7], 100).unwrap();
        assert!(res < 1e-12);
        assert_eq!(delta.len(), 2);
    }

    #[test]
    fn lan_remainder_vanishes_for_gaussian_means() {
        let spec = iid();
        let rep =
            lan_remainder(&spec, &[0.1], &[vec![1.0]], &[100, 400], &[vec![0.0], vec![1.0], vec![-2.0]], 5, 2).unwrap();
        for r in &rep.rows {
            if r.h == [0.0] {
                assert_eq!(r.mean_abs, 0.0);
            }
            assert!(r.mean_abs < 1e-7, "{r:?}");
        }
    }

    #[test]
    fn lan_grid_is_trimmed_at_boundary() {
        let spec = iid();
        let rep = lan_remainder(&spec, &[1.9], &[vec![1.0]], &[100], &[vec![0.5], vec![5.0]], 3, 2).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.trimmed, vec![(100, vec![5.0])]);
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        assert!(matches!(
            check_positive_definite(&[vec![1.0, 2.0], vec![2.0, 1.0]]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
