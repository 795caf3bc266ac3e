use alloc::vec::Vec;

use super::model::{aggregate, EnsembleModel, Member, Rule, Strategy, TrainingMode};
use super::weights::{adaboost_round, bagging_sample, Round, SampleWeights};
use crate::data::Dataset;
use crate::nn::{fraction_correct, predict, predict_proba, EpochStats, Network, NetworkConfig, TrainConfig, Trainer};
use crate::rng;
use crate::tensor::RealTensor;
use crate::{Error, Result};

const SAMPLE_STREAM: u64 = 0xba99;
const RETRY_SALT: u64 = 0x7e7_7e7;

/// Everything needed to train an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub k: usize,
    pub strategy: Strategy,
    pub mode: TrainingMode,
    pub rule: Rule,
    /// Boosting only: scale per-example losses by `M * u_i` instead of
    /// resampling by `u`.
    pub reweight_gradients: bool,
    /// Per-member schedule; its `seed` is replaced by the member seed.
    pub train: TrainConfig,
    pub seed: u64,
}

/// Per-round record of an ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberReport {
    pub round: usize,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub weighted_error: Option<f64>,
    pub accepted: bool,
    pub member_test_accuracy: Option<f64>,
    /// Accuracy of the ensemble of all accepted members so far.
    pub ensemble_test_accuracy: Option<f64>,
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub model: EnsembleModel,
    pub reports: Vec<MemberReport>,
}

/// Seed of member `k`; member 0 uses the ensemble seed itself so a
/// one-member ensemble matches a plain training run.
pub fn member_seed(seed: u64, k: usize) -> u64 {
    if k == 0 {
        seed
    } else {
        rng::mix(seed, k as u64)
    }
}

pub fn train_ensemble(config: &NetworkConfig, train: &Dataset, test: Option<&Dataset>, cfg: &EnsembleConfig) -> Result<EnsembleRun> {
    match cfg.strategy {
        Strategy::Bagging => train_bagging(config, train, test, cfg),
        Strategy::Boosting => train_boosting(config, train, test, cfg),
    }
}

/// Trains `net` on `indices` for the configured schedule, retrying once with
/// a derived seed if training diverges.
pub(crate) fn train_member(
    start: &Network,
    data: &Dataset,
    indices: &[usize],
    multipliers: Option<&[f32]>,
    schedule: &TrainConfig,
    seed: u64,
    fresh_init: bool,
) -> Result<(Network, Vec<EpochStats>, u64)> {
    let attempt = |seed: u64| -> Result<(Network, Vec<EpochStats>)> {
        let net = if fresh_init { Network::new(start.config(), seed)? } else { start.clone() };
        let mut trainer = Trainer::new(net, TrainConfig { seed, ..schedule.clone() });
        let mut log = Vec::new();
        while !trainer.finished() {
            log.push(trainer.run_epoch(data, indices, multipliers)?);
        }
        Ok((trainer.into_network(), log))
    };
    match attempt(seed) {
        Err(Error::Numerical(_)) => {
            let retry = rng::mix(seed, RETRY_SALT);
            attempt(retry).map(|(n, l)| (n, l, retry))
        }
        other => other.map(|(n, l)| (n, l, seed)),
    }
}

fn bootstrap(n: usize, k: usize, seed: u64, uniform: &SampleWeights) -> Result<Vec<usize>> {
    if k == 1 {
        return Ok((0..n).collect());
    }
    bagging_sample(n, uniform, &mut rng::stream(seed, SAMPLE_STREAM))
}

/// Test-set bookkeeping shared by both strategies.
struct TestTracker<'a> {
    test: Option<&'a Dataset>,
    probs: Vec<RealTensor>,
    alphas: Vec<f64>,
}

impl<'a> TestTracker<'a> {
    fn add(&mut self, net: &Network, alpha: f64, rule: Rule) -> Result<(Option<f64>, Option<f64>)> {
        let Some(test) = self.test else { return Ok((None, None)) };
        let p = predict_proba(net, test)?;
        let single = fraction_correct(&crate::nn::argmax_rows(&p), test.labels());
        self.probs.push(p);
        self.alphas.push(alpha);
        let joint = aggregate(&self.probs, &self.alphas, rule)?;
        Ok((Some(single), Some(fraction_correct(&joint.labels, test.labels()))))
    }
}

pub fn train_bagging(config: &NetworkConfig, train: &Dataset, test: Option<&Dataset>, cfg: &EnsembleConfig) -> Result<EnsembleRun> {
    if cfg.k == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    let n = train.len();
    let uniform = SampleWeights::uniform(n)?;
    let mut members: Vec<Member> = Vec::with_capacity(cfg.k);
    let mut reports = Vec::with_capacity(cfg.k);
    let mut tracker = TestTracker { test, probs: Vec::new(), alphas: Vec::new() };
    for k in 0..cfg.k {
        let seed = member_seed(cfg.seed, k);
        let indices = bootstrap(n, cfg.k, seed, &uniform)?;
        let (start, fresh) = match (cfg.mode, members.last()) {
            (TrainingMode::WarmRestart, Some(prev)) => (prev.network.clone(), false),
            _ => (Network::new(config, seed)?, true),
        };
        let (network, epochs, seed) = train_member(&start, train, &indices, None, &cfg.train, seed, fresh)?;
        let (member_acc, ens_acc) = tracker.add(&network, 1.0, cfg.rule)?;
        reports.push(MemberReport {
            round: k,
            seed,
            alpha: Some(1.0),
            weighted_error: None,
            accepted: true,
            member_test_accuracy: member_acc,
            ensemble_test_accuracy: ens_acc,
            epochs,
        });
        members.push(Member { network, alpha: 1.0, seed });
    }
    let model = EnsembleModel::new(members, Strategy::Bagging, cfg.mode, cfg.rule)?;
    Ok(EnsembleRun { model, reports })
}

pub fn train_boosting(config: &NetworkConfig, train: &Dataset, test: Option<&Dataset>, cfg: &EnsembleConfig) -> Result<EnsembleRun> {
    if cfg.k == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    let n = train.len();
    let mut u = SampleWeights::uniform(n)?;
    let mut members: Vec<Member> = Vec::with_capacity(cfg.k);
    let mut reports = Vec::with_capacity(cfg.k);
    let mut tracker = TestTracker { test, probs: Vec::new(), alphas: Vec::new() };
    let mut previous: Option<Network> = None;
    let all: Vec<usize> = (0..n).collect();
    for k in 0..cfg.k {
        let seed = member_seed(cfg.seed, k);
        let (indices, multipliers) = if k == 0 {
            (all.clone(), None)
        } else if cfg.reweight_gradients {
            (all.clone(), Some(u.as_slice().iter().map(|&w| (w * n as f64) as f32).collect::<Vec<_>>()))
        } else {
            (bagging_sample(n, &u, &mut rng::stream(seed, SAMPLE_STREAM))?, None)
        };
        let (start, fresh) = match (cfg.mode, &previous) {
            (TrainingMode::WarmRestart, Some(prev)) => (prev.clone(), false),
            _ => (Network::new(config, seed)?, true),
        };
        let (network, epochs, seed) =
            train_member(&start, train, &indices, multipliers.as_deref(), &cfg.train, seed, fresh)?;
        let pred = predict(&network, train)?;
        let (err, round) = adaboost_round(&u, &pred, train.labels(), train.classes())?;
        previous = Some(network.clone());
        match round {
            Round::Rejected => reports.push(MemberReport {
                round: k,
                seed,
                alpha: None,
                weighted_error: Some(err),
                accepted: false,
                member_test_accuracy: None,
                ensemble_test_accuracy: None,
                epochs,
            }),
            Round::Accepted { alpha, weights } => {
                let (member_acc, ens_acc) = tracker.add(&network, alpha, cfg.rule)?;
                reports.push(MemberReport {
                    round: k,
                    seed,
                    alpha: Some(alpha),
                    weighted_error: Some(err),
                    accepted: true,
                    member_test_accuracy: member_acc,
                    ensemble_test_accuracy: ens_acc,
                    epochs,
                });
                members.push(Member { network, alpha, seed });
                u = weights;
            }
        }
    }
    if members.is_empty() {
        return Err(Error::AllRejected {
            rounds: cfg.k,
            errors: reports.iter().filter_map(|r| r.weighted_error).collect(),
        });
    }
    let model = EnsembleModel::new(members, Strategy::Boosting, cfg.mode, cfg.rule)?;
    Ok(EnsembleRun { model, reports })
}

/// Independent bagging members trained one epoch at a time in lockstep so
/// the ensemble can be evaluated after every epoch.
#[derive(Debug, Clone)]
pub struct LockstepBagging {
    trainers: Vec<Trainer>,
    samples: Vec<Vec<usize>>,
    seeds: Vec<u64>,
    rule: Rule,
}

impl LockstepBagging {
    pub fn new(config: &NetworkConfig, train: &Dataset, k: usize, rule: Rule, schedule: &TrainConfig, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("ensemble size must be at least 1"));
        }
        let uniform = SampleWeights::uniform(train.len())?;
        let mut trainers = Vec::with_capacity(k);
        let mut samples = Vec::with_capacity(k);
        let mut seeds = Vec::with_capacity(k);
        for i in 0..k {
            let s = member_seed(seed, i);
            samples.push(bootstrap(train.len(), k, s, &uniform)?);
            trainers.push(Trainer::new(Network::new(config, s)?, TrainConfig { seed: s, ..schedule.clone() }));
            seeds.push(s);
        }
        Ok(LockstepBagging { trainers, samples, seeds, rule })
    }

    /// Runs one epoch for every member.
    pub fn step(&mut self, train: &Dataset) -> Result<Vec<EpochStats>> {
        self.trainers
            .iter_mut()
            .zip(&self.samples)
            .map(|(t, s)| t.run_epoch(train, s, None))
            .collect()
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let probs = self
            .trainers
            .iter()
            .map(|t| predict_proba(t.network(), data))
            .collect::<Result<Vec<_>>>()?;
        let pred = aggregate(&probs, &alloc::vec![1.0; probs.len()], self.rule)?;
        Ok(fraction_correct(&pred.labels, data.labels()))
    }

    pub fn into_model(self) -> Result<EnsembleModel> {
        let members = self
            .trainers
            .into_iter()
            .zip(self.seeds)
            .map(|(t, seed)| Member { network: t.into_network(), alpha: 1.0, seed })
            .collect();
        EnsembleModel::new(members, Strategy::Bagging, TrainingMode::Independent, self.rule)
    }
}
