use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`ProbVector`].
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A point `theta` of the parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("parameter vector must be non-empty"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite parameter entry {bad}")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &[f64]) -> f64 {
        euclidean(&self.0, other)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Vec<f64> {
        p.0
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Compact axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct ParamSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawSpace> for ParamSpace {
    type Error = Error;
    fn try_from(raw: RawSpace) -> Result<Self> {
        ParamSpace::new(raw.lower, raw.upper)
    }
}

impl From<ParamSpace> for RawSpace {
    fn from(s: ParamSpace) -> RawSpace {
        RawSpace { lower: s.lower, upper: s.upper }
    }
}

impl ParamSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::invalid("parameter space must have dimension >= 1"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::invalid(format!("box side {i} is not a proper interval: [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Componentwise inclusion (closed box).
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(self.lower.iter().zip(&self.upper)).all(|(t, (l, u))| *l <= *t && *t <= *u)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// Smallest distance from `theta` to the boundary (negative outside).
    pub fn interior_margin(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| (t - l).min(u - t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest distance from `theta` to any point of the box (attained at a corner).
    pub fn max_distance_from(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| (t - l).abs().max((u - t).abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest distance from `theta` to the box (zero inside).
    pub fn distance_to(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| {
                if t < l {
                    (l - t).powi(2)
                } else if t > u {
                    (t - u).powi(2)
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: theta.len() });
        }
        if !self.contains(theta) {
            return Err(Error::OutsideSpace(theta.to_vec()));
        }
        Ok(())
    }
}

/// A probability distribution on the state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("probability vector must be non-empty"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!("probability vector has a negative or non-finite entry: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Normalises non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::invalid("weights must be non-negative with positive finite sum"));
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(states: usize) -> Self {
        Self(vec![1.0 / states as f64; states])
    }

    pub(crate) fn from_vec_unchecked(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total-variation distance `(1/2) sum |p - q|`.
    pub fn tv_distance(&self, other: &ProbVector) -> f64 {
        tv_distance(&self.0, &other.0)
    }
}

impl Deref for ProbVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Vec<f64> {
        p.0
    }
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Row-stochastic `S x S` matrix, stored row-major.
///
/// [`TransitionMatrix::new`] enforces stochastic rows. Parametric families
/// build matrices through [`TransitionMatrix::from_rows_unchecked`] so that a
/// broken family can still be inspected by
/// [`validate_spec`](crate::model::validate_spec).
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    states: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self::from_rows_unchecked(rows)?;
        if let Some((i, dev)) = m.worst_row_deviation() {
            if dev > PROB_SUM_TOL {
                return Err(Error::invalid(format!("row {i} of the transition matrix is not a probability vector")));
            }
        }
        Ok(m)
    }

    /// Square, finite, non-negative; row sums are not checked.
    pub fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Result<Self> {
        let states = rows.len();
        if states == 0 {
            return Err(Error::invalid("transition matrix must have at least one state"));
        }
        let mut data = Vec::with_capacity(states * states);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != states {
                return Err(Error::invalid(format!("transition row {i} has {} entries, expected {states}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid(format!("transition row {i} has a negative or non-finite entry")));
            }
            data.extend(row);
        }
        Ok(Self { states, data })
    }

    pub fn identity(states: usize) -> Self {
        let mut data = vec![0.0; states * states];
        for i in 0..states {
            data[i * states + i] = 1.0;
        }
        Self { states, data }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.states + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.states..(from + 1) * self.states]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.states).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Row index and absolute deviation from 1 of the worst row sum.
    pub fn worst_row_deviation(&self) -> Option<(usize, f64)> {
        (0..self.states).map(|i| (i, (self.row(i).iter().sum::<f64>() - 1.0).abs())).max_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn is_stochastic(&self) -> bool {
        self.worst_row_deviation().is_none_or(|(_, d)| d <= PROB_SUM_TOL)
    }

    pub fn matmul(&self, other: &TransitionMatrix) -> TransitionMatrix {
        let s = self.states;
        let mut data = vec![0.0; s * s];
        for i in 0..s {
            for k in 0..s {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..s {
                    data[i * s + j] += a * other.get(k, j);
                }
            }
        }
        TransitionMatrix { states: s, data }
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, p: &[f64]) -> Vec<f64> {
        let s = self.states;
        let mut out = vec![0.0; s];
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (o, q) in out.iter_mut().zip(self.row(i)) {
                *o += pi * q;
            }
        }
        out
    }

    /// Dobrushin contraction coefficient: the largest total-variation
    /// distance between two rows.
    pub fn dobrushin(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.states {
            for b in (a + 1)..self.states {
                worst = worst.max(tv_distance(self.row(a), self.row(b)));
            }
        }
        worst
    }
}

/// Augmented data: hidden states (0-based) and observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPair {
    pub states: Vec<usize>,
    pub observations: Vec<f64>,
}

impl PathPair {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Columns `t,state,y` with `t` and `state` 0-based.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "state", "y"])?;
        for (t, (x, y)) in self.states.iter().zip(&self.observations).enumerate() {
            w.write_record([t.to_string(), x.to_string(), y.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_membership_is_componentwise() {
        let space = ParamSpace::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(space.contains(&[0.0, 1.0]));
        assert!(space.contains(&[1.0, 2.0]));
        assert!(!space.contains(&[1.1, 1.0]));
        assert!(!space.contains(&[0.0]));
        assert!(ParamSpace::new(vec![1.0], vec![1.0]).is_err());
        assert!((space.max_distance_from(&[0.0, 0.0]) - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(space.interior_margin(&[0.5, 1.0]), 0.5);
    }

    #[test]
    fn prob_vector_checks_mass() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        let p = ProbVector::from_weights(vec![1.0, 3.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn transition_matrix_rows() {
        assert!(TransitionMatrix::new(vec![vec![0.9, 0.0], vec![0.5, 0.5]]).is_err());
        let q = TransitionMatrix::new(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        assert_eq!(q.dobrushin(), 0.5);
        let q2 = q.matmul(&q);
        assert!((q2.dobrushin() - 0.25).abs() < 1e-15);
        assert_eq!(q.left_mul(&[1.0, 0.0]), vec![0.75, 0.25]);
    }
}
