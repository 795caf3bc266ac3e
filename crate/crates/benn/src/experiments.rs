//! The fixed toy task and the small experiments run against it.

use benn_core::analysis::{
    canonical_sum, robustness_random, robustness_trained, stability_track, Estimate, OutputKind, PerturbationSpec,
    Target, STABILITY_WINDOW,
};
use benn_core::data::{make_toy, Augment, Dataset, ToyKind, ToySpec};
use benn_core::ensemble::{
    member_seed, train_ensemble, EnsembleConfig, EnsembleModel, LockstepBagging, Rule, Strategy, TrainingMode,
};
use benn_core::nn::{accuracy, Network, NetworkConfig, OptimizerKind, Profile, TrainConfig, Trainer};

use crate::Result;

/// Semi-binary MLP for 8x8 single-channel toy images.
pub const TOY_MLP: &str = "\
input 1x8x8
classes 4
fc width=64
batchnorm
binact
fc width=64 weight=1 act=1
batchnorm
binact
fc width=64 weight=1 act=1
batchnorm
fc width=4
";

/// MLP with every weighted layer binary in weights and input activations.
pub const TOY_BNN: &str = "\
input 1x8x8
classes 4
fc width=64 weight=1 act=1
batchnorm
fc width=64 weight=1 act=1
batchnorm
fc width=4 weight=1 act=1
batchnorm
";

/// Wide MLP with every weighted layer binary, used for packed export.
pub const TOY_MLP_WIDE: &str = "\
input 1x8x8
classes 4
fc width=2048 weight=1 act=1
batchnorm
fc width=2048 weight=1 act=1
batchnorm
fc width=4 weight=1 act=1
batchnorm
";

/// Real-valued MLP that the random-network robustness protocol rewrites
/// with different precision profiles.
pub const ROBUSTNESS_MLP: &str = "\
input 1x8x8
classes 4
fc width=64
hardtanh
fc width=64
hardtanh
fc width=4
";

pub struct ToyDefaults {
    pub examples: usize,
    pub classes: usize,
    pub noise: f32,
    pub train: usize,
}

pub const DEFAULT_TOY: ToyDefaults = ToyDefaults { examples: 4000, classes: 4, noise: 1.4, train: 3000 };

/// Examples per error-rate evaluation in the trained-network protocol.
pub const EVAL_BATCH: usize = 100;

pub const TOY_SHAPE: [usize; 3] = [1, 8, 8];

pub fn toy_spec(seed: u64) -> ToySpec {
    ToySpec {
        kind: ToyKind::Blobs,
        examples: DEFAULT_TOY.examples,
        classes: DEFAULT_TOY.classes,
        shape: TOY_SHAPE.to_vec(),
        noise: DEFAULT_TOY.noise,
        seed,
    }
}

/// Training and test split of the toy task for `seed`.
pub fn toy_task(seed: u64) -> Result<(Dataset, Dataset)> {
    Ok(make_toy(&toy_spec(seed))?.split_at(DEFAULT_TOY.train))
}

pub fn toy_train_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 64,
        optimizer: OptimizerKind::adam(1e-3),
        clip_shadow: true,
        patience: None,
        augment: Augment::default(),
        seed,
    }
}

pub fn toy_config() -> Result<NetworkConfig> {
    Ok(NetworkConfig::parse(TOY_MLP)?)
}

fn mean(xs: &[f64]) -> f64 {
    canonical_sum(&mut xs.to_vec()) / xs.len() as f64
}

/// Test accuracies per seed of one single network and two ensembles.
#[derive(Debug, Clone)]
pub struct DirectionReport {
    pub single: Vec<f64>,
    pub bagging: Vec<f64>,
    pub boosting: Vec<f64>,
}

impl DirectionReport {
    pub fn means(&self) -> (f64, f64, f64) {
        (mean(&self.single), mean(&self.bagging), mean(&self.boosting))
    }
}

fn ensemble_accuracy(
    cfg: &NetworkConfig,
    train: &Dataset,
    test: &Dataset,
    strategy: Strategy,
    k: usize,
    schedule: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let ens = EnsembleConfig {
        k,
        strategy,
        mode: TrainingMode::Independent,
        rule: Rule::Soft,
        reweight_gradients: false,
        train: schedule.clone(),
        seed,
    };
    let run = train_ensemble(cfg, train, Some(test), &ens)?;
    Ok(run.model.predict(test).map(|p| benn_core::nn::fraction_correct(&p.labels, test.labels()))?)
}

/// Single network against bagged and boosted ensembles of size `k`.
pub fn ensemble_direction(seeds: &[u64], k: usize, epochs: usize) -> Result<DirectionReport> {
    let cfg = toy_config()?;
    let mut report = DirectionReport { single: vec![], bagging: vec![], boosting: vec![] };
    for &seed in seeds {
        let (train, test) = toy_task(seed)?;
        let schedule = toy_train_config(epochs, seed);
        let mut trainer = Trainer::new(Network::new(&cfg, seed)?, schedule.clone());
        let all: Vec<usize> = (0..train.len()).collect();
        while !trainer.finished() {
            trainer.run_epoch(&train, &all, None)?;
        }
        report.single.push(accuracy(trainer.network(), &test)?);
        report.bagging.push(ensemble_accuracy(&cfg, &train, &test, Strategy::Bagging, k, &schedule, seed)?);
        report.boosting.push(ensemble_accuracy(&cfg, &train, &test, Strategy::Boosting, k, &schedule, seed)?);
    }
    Ok(report)
}

/// Standard deviation of the last-window test accuracies, per seed.
#[derive(Debug, Clone)]
pub struct StabilityComparison {
    pub single: Vec<f64>,
    pub ensemble: Vec<f64>,
}

impl StabilityComparison {
    pub fn means(&self) -> (f64, f64) {
        (mean(&self.single), mean(&self.ensemble))
    }
}

/// Per-epoch test accuracy of a single network and of a bagged ensemble
/// trained in lockstep, reduced to the oscillation over the final epochs.
pub fn stability_comparison(
    cfg: &NetworkConfig,
    seeds: &[u64],
    k: usize,
    epochs: usize,
    lr: f32,
) -> Result<StabilityComparison> {
    let mut out = StabilityComparison { single: vec![], ensemble: vec![] };
    for &seed in seeds {
        let (train, test) = toy_task(seed)?;
        let schedule = TrainConfig { optimizer: OptimizerKind::adam(lr), ..toy_train_config(epochs, seed) };
        let mut trainer = Trainer::new(Network::new(cfg, member_seed(seed, 0))?, schedule.clone());
        let mut bag = LockstepBagging::new(cfg, &train, k, Rule::Soft, &schedule, seed)?;
        let all: Vec<usize> = (0..train.len()).collect();
        let (mut single, mut ensemble) = (Vec::with_capacity(epochs), Vec::with_capacity(epochs));
        for _ in 0..epochs {
            trainer.run_epoch(&train, &all, None)?;
            single.push(accuracy(trainer.network(), &test)?);
            bag.step(&train)?;
            ensemble.push(bag.accuracy(&test)?);
        }
        out.single.push(stability_track(&single, STABILITY_WINDOW)?.std);
        out.ensemble.push(stability_track(&ensemble, STABILITY_WINDOW)?.std);
    }
    Ok(out)
}

/// Output change under input noise for randomly weighted networks that
/// differ only in precision.
#[derive(Debug, Clone)]
pub struct RandomRobustness {
    pub binary: Estimate,
    pub quantized: Estimate,
    pub real: Estimate,
}

pub fn random_robustness(sigma2: f64, weight_samples: usize, trials: usize, inputs: usize, seed: u64) -> Result<RandomRobustness> {
    let base = NetworkConfig::parse(ROBUSTNESS_MLP)?;
    let (_, test) = toy_task(seed)?;
    let idx: Vec<usize> = (0..inputs.min(test.len())).collect();
    let x = test.subset(&idx).images().clone();
    let spec = PerturbationSpec { target: Target::Input, sigma2, trials, seed };
    let run = |p: Profile| -> Result<Estimate> {
        Ok(robustness_random(&base.clone().with_profile(p), &spec, weight_samples, 1.0, &x, OutputKind::Softmax)?)
    };
    Ok(RandomRobustness {
        binary: run(Profile::AllBinary)?,
        quantized: run(Profile::ActivationQuantized(2))?,
        real: run(Profile::Real)?,
    })
}

/// Squared error-rate change under input noise for one trained network and
/// a bagged ensemble of `k` trained on the same split.
#[derive(Debug, Clone)]
pub struct TrainedRobustness {
    pub single: Estimate,
    pub ensemble: Estimate,
}

pub fn trained_robustness(
    cfg: &NetworkConfig,
    sigma2: f64,
    k: usize,
    epochs: usize,
    trials: usize,
    seed: u64,
) -> Result<TrainedRobustness> {
    let (train, test) = toy_task(seed)?;
    let schedule = toy_train_config(epochs, seed);
    let ens = EnsembleConfig {
        k,
        strategy: Strategy::Bagging,
        mode: TrainingMode::Independent,
        rule: Rule::Soft,
        reweight_gradients: false,
        train: schedule.clone(),
        seed,
    };
    let model: EnsembleModel = train_ensemble(cfg, &train, None, &ens)?.model;
    let mut trainer = Trainer::new(Network::new(cfg, seed)?, schedule);
    let all: Vec<usize> = (0..train.len()).collect();
    while !trainer.finished() {
        trainer.run_epoch(&train, &all, None)?;
    }
    let spec = PerturbationSpec { target: Target::Input, sigma2, trials, seed };
    Ok(TrainedRobustness {
        single: robustness_trained(trainer.network(), &test, &spec, EVAL_BATCH)?,
        ensemble: robustness_trained(&model, &test, &spec, EVAL_BATCH)?,
    })
}

/// Wall-clock comparison of a float matrix product and the packed XNOR
/// product on the same `±1` operands.
#[derive(Debug, Clone, Copy)]
pub struct KernelTiming {
    pub float_secs: f64,
    pub packed_secs: f64,
}

impl KernelTiming {
    pub fn speedup(&self) -> f64 {
        self.float_secs / self.packed_secs
    }
}

pub fn kernel_speedup(outputs: usize, fan_in: usize, batch: usize, reps: usize, seed: u64) -> Result<KernelTiming> {
    use benn_core::bitcore::{binary_gemm, pack};
    use benn_core::{rng, RealTensor};
    use std::hint::black_box;
    use std::time::Instant;

    let mut r = rng::stream(seed, 0xbe7c);
    let mut signs = |n: usize| RealTensor::from_fn(&[n], |_| if rng::normal_f32(&mut r) >= 0.0 { 1.0 } else { -1.0 });
    let w = signs(outputs * fan_in).reshape(&[outputs, fan_in])?;
    let x = signs(batch * fan_in).reshape(&[batch, fan_in])?;
    let (pw, px) = (pack(&w)?, pack(&x)?);
    let reps = reps.max(1);

    let start = Instant::now();
    let mut out = vec![0f32; batch * outputs];
    for _ in 0..reps {
        for b in 0..batch {
            let xr = x.row(b);
            for o in 0..outputs {
                out[b * outputs + o] = w.row(o).iter().zip(xr).map(|(a, c)| a * c).sum();
            }
        }
        black_box(&out);
    }
    let float_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    for _ in 0..reps {
        black_box(binary_gemm(&pw, &px)?);
    }
    let packed_secs = start.elapsed().as_secs_f64();
    Ok(KernelTiming { float_secs, packed_secs })
}
