use nalgebra::{DMatrix, DVector};

use super::types::{ProbVector, TransitionMatrix};
use crate::error::{Error, Result};

/// Largest admissible `||pi Q - pi||_inf` for a returned law.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Solves `pi Q = pi`, `sum(pi) = 1`.
///
/// The null space of `I - Q^T` must be one-dimensional; a reducible chain
/// with several closed classes is rejected as non-unique.
pub fn stationary_distribution(q: &TransitionMatrix) -> Result<ProbVector> {
    let s = q.states();
    if s == 1 {
        return Ok(ProbVector::uniform(1));
    }
    let m = DMatrix::from_fn(s, s, |i, j| if i == j { 1.0 } else { 0.0 } - q.get(j, i));
    let singular = m.clone().svd(false, false).singular_values;
    let scale = singular.max().max(1.0);
    let rank = singular.iter().filter(|v| **v > 1e-10 * scale * s as f64).count();
    if rank < s - 1 {
        return Err(Error::NonUniqueStationary);
    }
    if rank == s {
        return Err(Error::Numeric("no invariant probability vector (rows do not sum to one)".into()));
    }

    let mut a = m;
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(s);
    b[s - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(Error::NonUniqueStationary)?;

    if pi.iter().any(|v| *v < -1e-12) {
        return Err(Error::Numeric("stationary solve produced negative mass".into()));
    }
    let clipped: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let pi: Vec<f64> = clipped.into_iter().map(|v| v / total).collect();

    let residual = stationarity_residual(q, &pi);
    if residual > STATIONARY_TOL {
        return Err(Error::Numeric(format!("stationary residual {residual:e} exceeds {STATIONARY_TOL:e}")));
    }
    ProbVector::new(pi)
}

/// `||pi Q - pi||_inf`.
pub fn stationarity_residual(q: &TransitionMatrix, pi: &[f64]) -> f64 {
    q.left_mul(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tm(rows: &[&[f64]]) -> TransitionMatrix {
        TransitionMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn symmetric_chain_is_uniform() {
        let pi = stationary_distribution(&tm(&[&[0.75, 0.25], &[0.25, 0.75]])).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(pi[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn asymmetric_two_state() {
        // pi_1 * 0.1 = pi_2 * 0.5
        let pi = stationary_distribution(&tm(&[&[0.9, 0.1], &[0.5, 0.5]])).unwrap();
        assert_abs_diff_eq!(pi[0], 5.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pi[1], 1.0 / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_is_not_unique() {
        assert!(matches!(stationary_distribution(&TransitionMatrix::identity(2)), Err(Error::NonUniqueStationary)));
        let block = tm(&[&[0.5, 0.5, 0.0], &[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0]]);
        assert!(matches!(stationary_distribution(&block), Err(Error::NonUniqueStationary)));
    }

    #[test]
    fn periodic_irreducible_chain_has_unique_law() {
        let pi = stationary_distribution(&tm(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn transient_state_gets_zero_mass() {
        let q = tm(&[&[0.5, 0.5, 0.0], &[0.2, 0.8, 0.0], &[0.3, 0.3, 0.4]]);
        let pi = stationary_distribution(&q).unwrap();
        assert_abs_diff_eq!(pi[2], 0.0, epsilon = 1e-14);
        assert!(stationarity_residual(&q, &pi) <= STATIONARY_TOL);
    }
}
