use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::rng::Rng;
use crate::{math, Error, Result};

/// Upper bound on a member weight; reached by members with zero weighted error.
pub const ALPHA_CAP: f64 = 13.815_510_557_964_274; // ln(1e6)

/// Probability distribution over training examples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights {
    u: Vec<f64>,
}

impl SampleWeights {
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::DegenerateWeights);
        }
        Ok(SampleWeights { u: vec![1.0 / m as f64; m] })
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_weights(mut u: Vec<f64>) -> Result<Self> {
        if u.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("sample weights must be finite and nonnegative"));
        }
        let total: f64 = u.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        u.iter_mut().for_each(|w| *w /= total);
        Ok(SampleWeights { u })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Weighted fraction of `miss` that is true.
    pub fn weighted_error(&self, miss: &[bool]) -> Result<f64> {
        if miss.len() != self.u.len() {
            return Err(Error::LengthMismatch { left: self.u.len(), right: miss.len() });
        }
        Ok(self.u.iter().zip(miss).filter(|(_, &m)| m).map(|(u, _)| u).sum())
    }
}

/// `m` i.i.d. indices drawn from the categorical distribution `u`.
pub fn bagging_sample(m: usize, u: &SampleWeights, rng: &mut Rng) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let dist = WeightedIndex::new(&u.u).map_err(|_| Error::DegenerateWeights)?;
    Ok((0..m).map(|_| dist.sample(rng)).collect())
}

/// Multiclass member weight `ln((1 - err) / err) + ln(C - 1)`, capped at
/// [`ALPHA_CAP`].
pub fn samme_alpha(err: f64, classes: usize) -> f64 {
    let raw = if err <= 0.0 {
        f64::INFINITY
    } else {
        math::ln((1.0 - err) / err) + math::ln(classes as f64 - 1.0)
    };
    raw.min(ALPHA_CAP)
}

/// Outcome of one boosting round.
#[derive(Debug, Clone, PartialEq)]
pub enum Round {
    Accepted { alpha: f64, weights: SampleWeights },
    /// Error at or above chance `(C - 1) / C`; weights are unchanged.
    Rejected,
}

/// Scores a member's predictions against `labels` under `u` and returns its
/// weighted error with the accept/reject decision.
pub fn adaboost_round(u: &SampleWeights, predictions: &[usize], labels: &[usize], classes: usize) -> Result<(f64, Round)> {
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: labels.len() });
    }
    if classes < 2 {
        return Err(Error::invalid("boosting needs at least two classes"));
    }
    let miss: Vec<bool> = predictions.iter().zip(labels).map(|(p, y)| p != y).collect();
    let err = u.weighted_error(&miss)?;
    let alpha = samme_alpha(err, classes);
    // summed weights carry rounding error, so treat near-chance as chance
    if err >= (classes as f64 - 1.0) / classes as f64 - 1e-12 || alpha <= 0.0 {
        return Ok((err, Round::Rejected));
    }
    let boost = math::exp(alpha);
    let next = u.u.iter().zip(&miss).map(|(&w, &m)| if m { w * boost } else { w }).collect();
    Ok((err, Round::Accepted { alpha, weights: SampleWeights::from_weights(next)? }))
}
