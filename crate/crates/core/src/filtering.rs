//! Prediction filter and log-likelihood.
//!
//! The filter `p_t(x) = P(X_t = x | Y_1^{t-1})` is carried in probability
//! space and renormalised at every step. The log-likelihood is accumulated
//! as a sum of increments `log sum_x p_t(x) g(Y_t | x)`, each computed with a
//! max shift so that long paths neither overflow nor underflow.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{HmmParams, HmmSpec, ParamVector, ProbVector};
use crate::stats::LogSumExp;

/// Largest number of hidden paths [`brute_force_loglik`] will enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// Filters `p_1 .. p_n` (with `p_1 = r_theta`) and the per-step increments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterTrace {
    pub filters: Vec<ProbVector>,
    pub increments: Vec<f64>,
    pub total: f64,
}

impl FilterTrace {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// CSV with columns `t, p_1 .. p_S, increment` (`t` and state labels 1-based).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let states = self.filters.first().map_or(0, |p| p.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=states).map(|s| format!("p_{s}")));
        header.push("increment".into());
        w.write_record(&header)?;
        for (t, (p, inc)) in self.filters.iter().zip(&self.increments).enumerate() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            row.push(inc.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Running forward recursion with reusable buffers.
pub struct Forward<'a> {
    params: &'a HmmParams,
    p: Vec<f64>,
    log_g: Vec<f64>,
    weights: Vec<f64>,
    t: usize,
}

impl<'a> Forward<'a> {
    pub fn new(params: &'a HmmParams) -> Self {
        Self::from_filter(params, params.initial.to_vec())
    }

    /// Starts the recursion from an arbitrary predictive law.
    pub fn from_filter(params: &'a HmmParams, p: Vec<f64>) -> Self {
        let s = params.states();
        Self { params, p, log_g: vec![0.0; s], weights: vec![0.0; s], t: 0 }
    }

    /// Current predictive law.
    pub fn filter(&self) -> &[f64] {
        &self.p
    }

    /// Absorbs `y`, moves to the next predictive law and returns the
    /// log-likelihood increment.
    pub fn step(&mut self, y: f64) -> Result<f64> {
        self.t += 1;
        let params = self.params;
        params.emission.log_densities_into(y, &mut self.log_g);
        let shift = self
            .log_g
            .iter()
            .zip(&self.p)
            .filter(|(_, p)| **p > 0.0)
            .map(|(g, _)| *g)
            .fold(f64::NEG_INFINITY, f64::max);
        if shift == f64::NEG_INFINITY {
            return Err(Error::FilterDegenerate { t: self.t });
        }
        let mut total = 0.0;
        for ((w, g), p) in self.weights.iter_mut().zip(&self.log_g).zip(&self.p) {
            *w = if *p > 0.0 { p * (g - shift).exp() } else { 0.0 };
            total += *w;
        }
        // `weights / total` is the filtering law; push it through Q
        self.p.fill(0.0);
        for (x, w) in self.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let a = w / total;
            for (o, q) in self.p.iter_mut().zip(params.transition.row(x)) {
                *o += a * q;
            }
        }
        let norm: f64 = self.p.iter().sum();
        for v in &mut self.p {
            *v /= norm;
        }
        Ok(shift + total.ln())
    }
}

impl HmmParams {
    /// One step of the forward equation: the predictive law after observing `y`.
    pub fn filter_step(&self, p: &[f64], y: f64) -> Result<ProbVector> {
        let mut fwd = Forward::from_filter(self, p.to_vec());
        fwd.step(y)?;
        Ok(ProbVector::from_vec_unchecked(fwd.p))
    }

    pub fn run_filter(&self, ys: &[f64]) -> Result<FilterTrace> {
        let mut fwd = Forward::new(self);
        let mut filters = Vec::with_capacity(ys.len());
        let mut increments = Vec::with_capacity(ys.len());
        for &y in ys {
            filters.push(ProbVector::from_vec_unchecked(fwd.p.clone()));
            increments.push(fwd.step(y)?);
        }
        let total = increments.iter().sum();
        Ok(FilterTrace { filters, increments, total })
    }

    pub fn log_likelihood_increments(&self, ys: &[f64]) -> Result<Vec<f64>> {
        let mut fwd = Forward::new(self);
        ys.iter().map(|&y| fwd.step(y)).collect()
    }

    pub fn log_likelihood(&self, ys: &[f64]) -> Result<f64> {
        let mut fwd = Forward::new(self);
        let mut total = 0.0;
        for &y in ys {
            total += fwd.step(y)?;
        }
        Ok(total)
    }
}

/// `f^theta(y, p)` for the family at `theta`.
pub fn filter_step(spec: &HmmSpec, theta: &[f64], p: &ProbVector, y: f64) -> Result<ProbVector> {
    if p.len() != spec.states() {
        return Err(Error::Dimension { expected: spec.states(), got: p.len() });
    }
    spec.resolve(theta)?.filter_step(p, y)
}

pub fn run_filter(spec: &HmmSpec, theta: &[f64], ys: &[f64]) -> Result<FilterTrace> {
    if ys.is_empty() {
        return Err(Error::invalid("observation sequence is empty"));
    }
    spec.resolve_in_space(theta)?.run_filter(ys)
}

pub fn log_likelihood(spec: &HmmSpec, theta: &[f64], ys: &[f64]) -> Result<f64> {
    spec.resolve_in_space(theta)?.log_likelihood(ys)
}

/// Log-likelihood by summing the joint density over every hidden path.
pub fn brute_force_loglik(spec: &HmmSpec, theta: &[f64], ys: &[f64]) -> Result<f64> {
    let s = spec.states();
    let paths = (s as f64).powi(ys.len().min(i32::MAX as usize) as i32);
    if paths > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { paths, limit: ENUMERATION_LIMIT });
    }
    let params = spec.resolve(theta)?;
    let log_g: Vec<Vec<f64>> = ys
        .iter()
        .map(|&y| {
            let mut row = vec![0.0; s];
            params.emission.log_densities_into(y, &mut row);
            row
        })
        .collect();
    let log_q: Vec<f64> = params.transition.as_slice().iter().map(|v| v.ln()).collect();
    let mut acc = LogSumExp::default();
    for x in 0..s {
        enumerate(&log_g, &log_q, s, 1, x, params.initial[x].ln() + log_g[0][x], &mut acc);
    }
    Ok(acc.value())
}

fn enumerate(log_g: &[Vec<f64>], log_q: &[f64], s: usize, t: usize, prev: usize, partial: f64, acc: &mut LogSumExp) {
    if partial == f64::NEG_INFINITY {
        return;
    }
    if t == log_g.len() {
        acc.push(partial);
        return;
    }
    for x in 0..s {
        enumerate(log_g, log_q, s, t + 1, x, partial + log_q[prev * s + x] + log_g[t][x], acc);
    }
}

/// `F_n(theta_1, theta_2) = l_n(theta_1) - l_n(theta_2)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LikelihoodRatioValue {
    pub theta_1: ParamVector,
    pub theta_2: ParamVector,
    pub value: f64,
}

pub fn loglik_ratio(spec: &HmmSpec, theta_1: &[f64], theta_2: &[f64], ys: &[f64]) -> Result<LikelihoodRatioValue> {
    let a = log_likelihood(spec, theta_1, ys)?;
    let b = log_likelihood(spec, theta_2, ys)?;
    Ok(LikelihoodRatioValue {
        theta_1: ParamVector::new(theta_1.to_vec())?,
        theta_2: ParamVector::new(theta_2.to_vec())?,
        value: a - b,
    })
}
