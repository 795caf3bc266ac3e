use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::Dataset;
use crate::nn::{predict_proba, Network, NetworkConfig};
use crate::tensor::RealTensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Bagging,
    Boosting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// α-weighted majority vote over member argmax labels.
    Hard,
    /// α-weighted mean of member class probabilities.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMode {
    Independent,
    /// Each member starts from a copy of the previous member.
    WarmRestart,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(Error::InvalidArgument(alloc::format!(
                        "unknown {} `{other}`", stringify!($ty).to_ascii_lowercase()
                    ))),
                }
            }
        }
    };
}

text_enum!(Strategy { Bagging => "bag", Boosting => "boost" });
text_enum!(Rule { Hard => "hard", Soft => "soft" });
text_enum!(TrainingMode { Independent => "indep", WarmRestart => "warm" });

#[derive(Debug, Clone)]
pub struct Member {
    pub network: Network,
    pub alpha: f64,
    pub seed: u64,
}

/// Aggregated class distribution and labels for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[N, C]`; one-hot rows under the hard rule.
    pub distribution: RealTensor,
    pub labels: Vec<usize>,
}

/// Trained members sharing one architecture, with their weights and
/// aggregation rule.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    members: Vec<Member>,
    pub strategy: Strategy,
    pub mode: TrainingMode,
    pub rule: Rule,
    /// Ignore α and weight every member equally.
    pub uniform: bool,
}

impl EnsembleModel {
    pub fn new(members: Vec<Member>, strategy: Strategy, mode: TrainingMode, rule: Rule) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::invalid("ensemble needs at least one member"))?;
        let config = first.network.config();
        if members.iter().any(|m| m.network.config() != config) {
            return Err(Error::invalid("ensemble members must share one network configuration"));
        }
        if members.iter().any(|m| !(m.alpha > 0.0 && m.alpha.is_finite())) {
            return Err(Error::invalid("member weights must be positive and finite"));
        }
        Ok(EnsembleModel { members, strategy, mode, rule, uniform: false })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub(crate) fn members_mut(&mut self) -> &mut [Member] {
        &mut self.members
    }

    pub fn config(&self) -> &NetworkConfig {
        self.members[0].network.config()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.members.iter().map(|m| if self.uniform { 1.0 } else { m.alpha }).collect()
    }

    pub fn member_probabilities(&self, data: &Dataset) -> Result<Vec<RealTensor>> {
        self.members.iter().map(|m| predict_proba(&m.network, data)).collect()
    }

    pub fn predict(&self, data: &Dataset) -> Result<Prediction> {
        aggregate(&self.member_probabilities(data)?, &self.alphas(), self.rule)
    }
}

/// Combines per-member `[N, C]` probability tensors. Sums are taken in a
/// canonical order so the result does not depend on member order.
pub fn aggregate(probs: &[RealTensor], alphas: &[f64], rule: Rule) -> Result<Prediction> {
    let first = probs.first().ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    if probs.len() != alphas.len() {
        return Err(Error::LengthMismatch { left: probs.len(), right: alphas.len() });
    }
    if let Some(p) = probs.iter().find(|p| p.shape() != first.shape() || p.shape().len() != 2) {
        return Err(Error::shape(first.shape(), p.shape()));
    }
    let (n, c) = (first.rows(), first.row_len());
    let mut dist = vec![0.0f32; n * c];
    let mut labels = Vec::with_capacity(n);
    let mut terms: Vec<f64> = Vec::with_capacity(probs.len());
    let mut scores = vec![0.0f64; c];
    let total: f64 = canonical_sum(&mut alphas.to_vec());
    for i in 0..n {
        for (class, score) in scores.iter_mut().enumerate() {
            terms.clear();
            for (p, &a) in probs.iter().zip(alphas) {
                let row = p.row(i);
                match rule {
                    Rule::Soft => terms.push(a * f64::from(row[class])),
                    Rule::Hard => {
                        if crate::nn::argmax(row) == class {
                            terms.push(a);
                        }
                    }
                }
            }
            *score = canonical_sum(&mut terms);
        }
        let label = argmax_f64(&scores);
        labels.push(label);
        let out = &mut dist[i * c..(i + 1) * c];
        match rule {
            Rule::Soft => out.iter_mut().zip(&scores).for_each(|(o, s)| *o = (s / total) as f32),
            Rule::Hard => out[label] = 1.0,
        }
    }
    Ok(Prediction { distribution: RealTensor::new(&[n, c], dist)?, labels })
}

fn canonical_sum(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn argmax_f64(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
