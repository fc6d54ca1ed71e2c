use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to posterior entries before any divergence is taken.
pub const SMOOTHING_EPSILON: f64 = 1e-10;

/// A discrete distribution over mixture components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Model("empty probability vector".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Model("probability outside [0, 1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Model(format!("probabilities sum to {sum}")));
        }
        Ok(ProbabilityVector(probs))
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Model("cannot normalize probability weights".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        ProbabilityVector::new(weights)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Floors every entry at `eps` and renormalizes.
    pub fn smoothed(&self, eps: f64) -> ProbabilityVector {
        let floored: Vec<f64> = self.0.iter().map(|&p| p.max(eps)).collect();
        let sum: f64 = floored.iter().sum();
        ProbabilityVector(floored.into_iter().map(|p| p / sum).collect())
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbabilityVector::new(v)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Vec<f64> {
        p.0
    }
}

/// `sum p_i ln(p_i / q_i)`. Inputs are expected to be smoothed; a zero `p_i`
/// contributes nothing.
pub fn kl_divergence(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimMismatch { expected: p.len(), found: q.len() });
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.0.iter().zip(&q.0) {
        if pi > 0.0 {
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total.max(0.0))
}

pub fn jensen_shannon(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimMismatch { expected: p.len(), found: q.len() });
    }
    let m = ProbabilityVector(p.0.iter().zip(&q.0).map(|(a, b)| 0.5 * (a + b)).collect());
    Ok(0.5 * kl_divergence(p, &m)? + 0.5 * kl_divergence(q, &m)?)
}

/// Which divergence ranks candidates against the query's posterior.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    /// KL(query || candidate).
    #[default]
    Kl,
    /// KL(candidate || query).
    KlReverse,
    JensenShannon,
}

/// Smooths both vectors, then applies the chosen divergence with the query first.
pub fn divergence(kind: Divergence, query: &ProbabilityVector, candidate: &ProbabilityVector) -> Result<f64> {
    let q = query.smoothed(SMOOTHING_EPSILON);
    let c = candidate.smoothed(SMOOTHING_EPSILON);
    match kind {
        Divergence::Kl => kl_divergence(&q, &c),
        Divergence::KlReverse => kl_divergence(&c, &q),
        Divergence::JensenShannon => jensen_shannon(&q, &c),
    }
}
