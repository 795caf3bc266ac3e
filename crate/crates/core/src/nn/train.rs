use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::layers::Mode;
use super::network::Network;
use super::ops::{argmax_rows, softmax_rows};
use super::optim::{Optimizer, OptimizerKind};
use crate::data::{augment_images, Augment, Dataset};
use crate::rng::{self, Rng};
use crate::tensor::RealTensor;
use crate::{math, Error, Result};

const SHUFFLE_STREAM: u64 = 0x5b0f;
const AUGMENT_STREAM: u64 = 0xa06e;
const EVAL_CHUNK: usize = 256;

/// Minibatch training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Clamp binary shadow weights to `[-1, 1]` after every update.
    pub clip_shadow: bool,
    /// Stop once the training loss has not improved for this many epochs.
    pub patience: Option<usize>,
    pub augment: Augment,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            optimizer: OptimizerKind::adam(1e-3),
            clip_shadow: true,
            patience: None,
            augment: Augment::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

/// Mean of `m_i * CE_i` over the batch and its gradient with respect to the
/// logits. Without multipliers every `m_i` is 1.
pub fn softmax_cross_entropy(
    logits: &RealTensor,
    labels: &[usize],
    multipliers: Option<&[f32]>,
) -> Result<(f64, RealTensor)> {
    let n = logits.rows();
    if labels.len() != n {
        return Err(Error::LengthMismatch { left: n, right: labels.len() });
    }
    if let Some(m) = multipliers {
        if m.len() != n {
            return Err(Error::LengthMismatch { left: n, right: m.len() });
        }
    }
    let mut grad = softmax_rows(logits);
    let c = grad.row_len();
    let mut loss = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::InvalidArgument(format!("label {y} out of range for {c} outputs")));
        }
        let m = multipliers.map_or(1.0, |m| m[i]);
        let row = grad.row_mut(i);
        loss += f64::from(m) * -math::ln(f64::from(row[y]).max(1e-30));
        row[y] -= 1.0;
        row.iter_mut().for_each(|g| *g *= m / n as f32);
    }
    Ok((loss / n as f64, grad))
}

/// Owns a network and its optimizer across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: Network,
    opt: Optimizer,
    config: TrainConfig,
    rng: Rng,
    augment_rng: Rng,
    epoch: usize,
    best_loss: f64,
    stale_epochs: usize,
}

impl Trainer {
    pub fn new(mut net: Network, config: TrainConfig) -> Self {
        net.refresh_binary(config.clip_shadow);
        Trainer {
            net,
            opt: Optimizer::new(config.optimizer),
            rng: rng::stream(config.seed, SHUFFLE_STREAM),
            augment_rng: rng::stream(config.seed, AUGMENT_STREAM),
            config,
            epoch: 0,
            best_loss: f64::INFINITY,
            stale_epochs: 0,
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// True once the configured epoch budget or patience is exhausted.
    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs || self.config.patience.is_some_and(|p| self.stale_epochs >= p)
    }

    /// One pass over `indices` (shuffled) of `data`. `multipliers[k]` scales
    /// the loss of example `indices[k]`.
    pub fn run_epoch(&mut self, data: &Dataset, indices: &[usize], multipliers: Option<&[f32]>) -> Result<EpochStats> {
        if let Some(m) = multipliers {
            if m.len() != indices.len() {
                return Err(Error::LengthMismatch { left: indices.len(), right: m.len() });
            }
        }
        let mut order: Vec<usize> = (0..indices.len()).collect();
        order.shuffle(&mut self.rng);
        let bs = self.config.batch_size.max(1);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (b, chunk) in order.chunks(bs).enumerate() {
            let picked: Vec<usize> = chunk.iter().map(|&k| indices[k]).collect();
            let mult: Option<Vec<f32>> = multipliers.map(|m| chunk.iter().map(|&k| m[k]).collect());
            let (mut x, y) = data.batch(&picked);
            if self.config.augment.is_active() {
                augment_images(&mut x, &self.config.augment, &mut self.augment_rng)?;
            }
            let logits = self.net.forward(&x, Mode::Train)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &y, mult.as_deref())?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {}, batch {b}",
                    self.epoch + 1
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            correct += argmax_rows(&logits).iter().zip(&y).filter(|(p, t)| p == t).count();
            self.net.zero_grad();
            self.net.backward(&dlogits)?;
            self.opt.step(self.net.params_mut());
            self.net.refresh_binary(self.config.clip_shadow);
        }
        self.epoch += 1;
        let n = indices.len().max(1) as f64;
        let loss = loss_sum / n;
        if loss < self.best_loss * (1.0 - 1e-4) {
            self.best_loss = loss;
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
        }
        Ok(EpochStats { epoch: self.epoch, loss, train_accuracy: correct as f64 / n })
    }
}

/// Evaluation-mode class probabilities for every example, in chunks.
pub fn predict_proba(net: &Network, data: &Dataset) -> Result<RealTensor> {
    let mut values = Vec::with_capacity(data.len() * net.config().classes);
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, _) = data.batch(chunk);
        values.extend_from_slice(net.predict_proba(&x)?.values());
    }
    RealTensor::new(&[data.len(), net.config().classes], values)
}

pub fn predict(net: &Network, data: &Dataset) -> Result<Vec<usize>> {
    Ok(argmax_rows(&predict_proba(net, data)?))
}

/// Fraction of `data` classified correctly.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    let pred = predict(net, data)?;
    Ok(fraction_correct(&pred, data.labels()))
}

pub fn fraction_correct(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, t)| p == t).count() as f64 / labels.len() as f64
}
