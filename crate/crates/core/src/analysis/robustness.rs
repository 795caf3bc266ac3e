//! Sensitivity of network outputs and error rates to Gaussian perturbation
//! of inputs or weights.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::stats::{canonical_sum, Estimate};
use crate::data::Dataset;
use crate::ensemble::EnsembleModel;
use crate::nn::{fraction_correct, predict, softmax_rows, Network, NetworkConfig, WeightInit};
use crate::rng::{self, Rng};
use crate::tensor::RealTensor;
use crate::{math, Error, Result};

const INPUT_NOISE: u64 = 0x1a9;
const WEIGHT_NOISE: u64 = 0x3e1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Input,
    Weights,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Input => "input",
            Target::Weights => "weights",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(Target::Input),
            "weights" => Ok(Target::Weights),
            other => Err(Error::InvalidArgument(alloc::format!("unknown perturbation target `{other}`"))),
        }
    }
}

/// Zero-mean Gaussian perturbation with variance `sigma2`, repeated `trials` times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub target: Target,
    pub sigma2: f64,
    pub trials: usize,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2.is_finite() && (0.0..=10.0).contains(&self.sigma2)) {
            return Err(Error::invalid("perturbation variance must lie in [0, 10]"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("perturbation needs at least one trial"));
        }
        Ok(())
    }

    fn sigma(&self) -> f32 {
        math::sqrt(self.sigma2) as f32
    }
}

/// What the output-change metric compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Softmax,
    Logits,
}

/// Identifier of an example derived from its contents, so per-example noise
/// does not depend on where the example sits in a batch.
fn content_key(row: &[f32]) -> u64 {
    row.iter().fold(0x6a09_e667_f3bc_c908, |h, v| rng::mix(h, u64::from(v.to_bits())))
}

/// Adds `N(0, σ^2)` noise to every row, keyed by row content and `trial`.
fn perturb_rows(x: &RealTensor, sigma: f32, seed: u64, trial: u64) -> RealTensor {
    let mut out = x.clone();
    for i in 0..x.rows() {
        let key = rng::mix(content_key(x.row(i)), trial);
        let mut r = rng::stream(seed ^ INPUT_NOISE, key);
        out.row_mut(i).iter_mut().for_each(|v| *v += sigma * rng::normal_f32(&mut r));
    }
    out
}

fn outputs(net: &Network, x: &RealTensor, kind: OutputKind) -> Result<RealTensor> {
    let logits = net.infer(x)?;
    Ok(match kind {
        OutputKind::Softmax => softmax_rows(&logits),
        OutputKind::Logits => logits,
    })
}

fn squared_change(a: &RealTensor, b: &RealTensor) -> Vec<f64> {
    (0..a.rows())
        .map(|i| a.row(i).iter().zip(b.row(i)).map(|(p, q)| { let d = f64::from(p - q); d * d }).sum())
        .collect()
}

/// `E_w E_Δ ||f(x + Δ; w) - f(x; w)||^2` averaged over the rows of `inputs`,
/// with weights drawn `N(0, weight_std^2)` afresh for each of
/// `weight_samples` networks. Weight samples are the i.i.d. units of the
/// reported standard error.
pub fn robustness_random(
    config: &NetworkConfig,
    spec: &PerturbationSpec,
    weight_samples: usize,
    weight_std: f32,
    inputs: &RealTensor,
    kind: OutputKind,
) -> Result<Estimate> {
    spec.validate()?;
    if weight_samples == 0 || inputs.rows() == 0 {
        return Err(Error::invalid("need at least one weight sample and one input"));
    }
    let sigma = spec.sigma();
    let mut per_sample = Vec::with_capacity(weight_samples);
    for s in 0..weight_samples {
        let net_seed = rng::mix(spec.seed, s as u64);
        let net = Network::with_init(config, WeightInit::Normal { std: weight_std }, net_seed)?;
        let clean = outputs(&net, inputs, kind)?;
        let mut terms = Vec::with_capacity(inputs.rows() * spec.trials);
        for t in 0..spec.trials as u64 {
            let changed = match spec.target {
                Target::Input => outputs(&net, &perturb_rows(inputs, sigma, net_seed, t), kind)?,
                Target::Weights => {
                    let mut noisy = net.clone();
                    noisy.perturb_weights(sigma, &mut rng::stream(net_seed ^ WEIGHT_NOISE, t));
                    outputs(&noisy, inputs, kind)?
                }
            };
            terms.extend(squared_change(&changed, &clean));
        }
        let n = terms.len() as f64;
        per_sample.push(canonical_sum(&mut terms) / n);
    }
    Ok(Estimate::from_samples(&per_sample))
}

/// A trained classifier whose weights can be perturbed.
pub trait Classifier: Clone {
    fn classify(&self, data: &Dataset) -> Result<Vec<usize>>;
    fn perturb_weights(&mut self, sigma: f32, rng: &mut Rng);
}

impl Classifier for Network {
    fn classify(&self, data: &Dataset) -> Result<Vec<usize>> {
        predict(self, data)
    }

    fn perturb_weights(&mut self, sigma: f32, rng: &mut Rng) {
        Network::perturb_weights(self, sigma, rng);
    }
}

impl Classifier for EnsembleModel {
    fn classify(&self, data: &Dataset) -> Result<Vec<usize>> {
        Ok(self.predict(data)?.labels)
    }

    fn perturb_weights(&mut self, sigma: f32, rng: &mut Rng) {
        self.members_mut().iter_mut().for_each(|m| m.network.perturb_weights(sigma, rng));
    }
}

/// `E_Δ (L(f(x + Δ)) - L(f(x)))^2` where `L` is the 0/1 error rate over
/// `data`; the trials are the i.i.d. units of the standard error. Input
/// noise is keyed by example content, so different models evaluated with the
/// same spec see identical perturbations.
/// `E_Δ (L(f(x + Δ)) - L(f(x)))^2` where `L` is the 0/1 error rate over an
/// evaluation batch of `batch` consecutive examples. Squared changes are
/// averaged over the batches of `data`, then over noise draws, which are the
/// units of the reported standard error.
pub fn robustness_trained<C: Classifier>(model: &C, data: &Dataset, spec: &PerturbationSpec, batch: usize) -> Result<Estimate> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("robustness needs a non-empty dataset"));
    }
    if batch == 0 {
        return Err(Error::invalid("evaluation batch must hold at least one example"));
    }
    let sigma = spec.sigma();
    let errors = |pred: &[usize]| -> Vec<f64> {
        pred.chunks(batch)
            .zip(data.labels().chunks(batch))
            .map(|(p, l)| 1.0 - fraction_correct(p, l))
            .collect()
    };
    let base = errors(&model.classify(data)?);
    let mut squares = Vec::with_capacity(spec.trials);
    for t in 0..spec.trials as u64 {
        let pred = match spec.target {
            Target::Input => {
                let noisy = perturb_rows(data.images(), sigma, spec.seed, t);
                model.classify(&Dataset::new(noisy, data.labels().to_vec(), data.classes())?)?
            }
            Target::Weights => {
                let mut noisy = model.clone();
                noisy.perturb_weights(sigma, &mut rng::stream(spec.seed ^ WEIGHT_NOISE, t));
                noisy.classify(data)?
            }
        };
        let mut per_batch: Vec<f64> = errors(&pred).iter().zip(&base).map(|(e, b)| (e - b) * (e - b)).collect();
        squares.push(canonical_sum(&mut per_batch) / base.len() as f64);
    }
    Ok(Estimate::from_samples(&squares))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_noise_ignores_position() {
        let x = RealTensor::new(&[2, 3], alloc::vec![0.1, 0.2, 0.3, -0.5, 0.0, 0.5]).unwrap();
        let swapped = x.select_rows(&[1, 0]);
        let a = perturb_rows(&x, 0.1, 4, 2);
        let b = perturb_rows(&swapped, 0.1, 4, 2);
        assert_eq!(a.row(0), b.row(1));
        assert_eq!(a.row(1), b.row(0));
    }
}
