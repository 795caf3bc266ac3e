use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use benn::container::{checkpoint_bytes, export_bytes, load_checkpoint, load_network, save_checkpoint, sha256_hex};
use benn::error::{write, BennError, Result};
use benn::experiments::{DEFAULT_TOY, EVAL_BATCH};
use benn::metrics::{
    confusion_csv, write_csv, BTableRow, EnsembleRow, ExportRow, PerturbRow, Theorem1Row, Theorem2Row, TrainRow,
};
use benn::source::{load_config, parse_dims, parse_toy_kind, DataSource};
use benn::store::{is_ensemble_dir, load_ensemble, save_ensemble, RunManifest};
use benn_core::analysis::{
    b_table, robustness_trained, verify_theorem1, verify_theorem2, PerturbationSpec, Target,
};
use benn_core::data::{Augment, Dataset, ToySpec};
use benn_core::ensemble::{train_ensemble, EnsembleConfig, EnsembleModel, Rule, Strategy, TrainingMode};
use benn_core::nn::{
    accuracy, predict, Network, NetworkConfig, OptimizerKind, Profile, TrainConfig, Trainer,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "benn", version, about = "Binary neural networks, ensembles and their analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write its checkpoint and per-epoch metrics.
    Train(TrainArgs),
    /// Train and store an ensemble.
    Ensemble {
        #[command(subcommand)]
        command: EnsembleCommand,
    },
    /// Accuracy and confusion matrix of a checkpoint, export or ensemble.
    Eval(EvalArgs),
    /// Sensitivity of a trained model to Gaussian noise.
    Perturb(PerturbArgs),
    /// Variance analyses that need no trained model.
    Analyze {
        #[command(subcommand)]
        command: AnalyzeCommand,
    },
    /// Write the packed inference file of a checkpoint and report sizes.
    Export(ExportArgs),
    /// Time the packed XNOR product against a float product of the same size.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum EnsembleCommand {
    Train(EnsembleArgs),
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Sign-flip variance B and R = σ² for each σ.
    BTable(BTableArgs),
    /// Single-neuron variance per regime and bagging size.
    Theorem1(Theorem1Args),
    /// Output-variation bounds for random linear stacks.
    Theorem2(Theorem2Args),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// `toy`, `idx:IMAGES,LABELS` or `cifar:PATH`.
    #[arg(long, default_value = "toy")]
    data: String,
    /// Held-out set in the same syntax; toy and single-file data are split
    /// by `--train-fraction` when absent.
    #[arg(long)]
    test_data: Option<String>,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    #[arg(long, default_value = "blobs")]
    toy_kind: String,
    #[arg(long, default_value_t = DEFAULT_TOY.examples)]
    toy_n: usize,
    #[arg(long, default_value_t = DEFAULT_TOY.classes)]
    toy_classes: usize,
    #[arg(long, default_value = "1x8x8")]
    toy_shape: String,
    #[arg(long, default_value_t = DEFAULT_TOY.noise)]
    toy_noise: f32,
    /// Defaults to the run seed.
    #[arg(long)]
    toy_seed: Option<u64>,
}

impl DataArgs {
    fn toy(&self, seed: u64) -> Result<ToySpec> {
        Ok(ToySpec {
            kind: parse_toy_kind(&self.toy_kind)?,
            examples: self.toy_n,
            classes: self.toy_classes,
            shape: parse_dims(&self.toy_shape)?,
            noise: self.toy_noise,
            seed: self.toy_seed.unwrap_or(seed),
        })
    }

    /// Training and optional test split.
    fn load(&self, seed: u64) -> Result<(Dataset, Option<Dataset>)> {
        let toy = self.toy(seed)?;
        let data = DataSource::parse(&self.data, &toy)?.load()?;
        match &self.test_data {
            Some(t) => Ok((data, Some(DataSource::parse(t, &toy)?.load()?))),
            None => {
                if !(0.0..=1.0).contains(&self.train_fraction) {
                    return Err(BennError::Usage("--train-fraction must lie in [0, 1]".into()));
                }
                let n = (data.len() as f64 * self.train_fraction).round() as usize;
                let (train, test) = data.split_at(n);
                Ok((train, (!test.is_empty()).then_some(test)))
            }
        }
    }

    /// Evaluation set: the test split when one exists, else everything.
    fn load_eval(&self, seed: u64) -> Result<Dataset> {
        let (train, test) = self.load(seed)?;
        Ok(test.unwrap_or(train))
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Config file or `builtin:NAME` (toy-mlp, toy-bnn, toy-mlp-wide, nin-cifar, alexnet, resnet18).
    #[arg(long, default_value = "builtin:toy-mlp")]
    config: String,
    /// Rewrite layer precisions: sb, ab, wq<k>, aq<k>, ei, real.
    #[arg(long)]
    profile: Option<String>,
    /// Multiply hidden widths (0.5 for Tiny, 0.1 for Nano variants).
    #[arg(long)]
    width_scale: Option<f64>,
}

impl ModelArgs {
    fn config(&self, data: &Dataset) -> Result<NetworkConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(p) = &self.profile {
            cfg = cfg.with_profile(p.parse::<Profile>()?);
        }
        if let Some(f) = self.width_scale {
            cfg = cfg.scaled_width(f);
        }
        if cfg.input != data.image_shape() {
            return Err(BennError::Format(format!(
                "config expects input {:?} but data has {:?}",
                cfg.input,
                data.image_shape()
            )));
        }
        if cfg.classes != data.classes() {
            return Err(BennError::Format(format!(
                "config has {} classes but data has {}",
                cfg.classes,
                data.classes()
            )));
        }
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f32,
    /// adam or sgd.
    #[arg(long, default_value = "adam")]
    optimizer: String,
    /// SGD momentum.
    #[arg(long, default_value_t = 0.9)]
    momentum: f32,
    /// Leave binary shadow weights unclipped.
    #[arg(long)]
    no_clip: bool,
    /// Stop after this many epochs without training-loss improvement.
    #[arg(long)]
    patience: Option<usize>,
    /// Random horizontal flips of image inputs.
    #[arg(long)]
    flip: bool,
    /// Random shifts of up to this many pixels (padded crop).
    #[arg(long, default_value_t = 0)]
    crop_pad: usize,
}

impl ScheduleArgs {
    fn config(&self, seed: u64) -> Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => OptimizerKind::adam(self.lr),
            "sgd" => OptimizerKind::sgd(self.lr, self.momentum),
            other => return Err(BennError::Usage(format!("unknown optimizer `{other}`"))),
        };
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer,
            clip_shadow: !self.no_clip,
            patience: self.patience,
            augment: Augment { flip: self.flip, crop_pad: self.crop_pad },
            seed,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// bag or boost.
    #[arg(long)]
    strategy: String,
    #[arg(long)]
    k: usize,
    /// indep or warm.
    #[arg(long, default_value = "indep")]
    mode: String,
    /// hard or soft.
    #[arg(long, default_value = "soft")]
    rule: String,
    /// Boosting: scale per-example losses by the sample weights instead of resampling.
    #[arg(long)]
    reweight_gradients: bool,
    /// Weight all members equally when aggregating.
    #[arg(long)]
    uniform_alpha: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint, packed export or ensemble directory.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for confusion.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated noise variances.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
    sigma2: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// input or weights.
    #[arg(long, default_value = "input")]
    target: String,
    /// Examples per error-rate evaluation.
    #[arg(long, default_value_t = EVAL_BATCH)]
    eval_batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BTableArgs {
    #[arg(long, value_delimiter = ',', default_value = "1.5,1.0,0.5,0.1,0.01,0.001")]
    sigmas: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Theorem1Args {
    #[arg(long, default_value_t = 256)]
    fan_in: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma_w: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5")]
    sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Theorem2Args {
    /// Hidden width of every layer.
    #[arg(long, default_value_t = 16)]
    width: usize,
    /// Numbers of layers to test.
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    depths: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    sigma_w: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 64)]
    samples_per_trial: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Packed output file.
    #[arg(long)]
    out: PathBuf,
    /// Size report CSV; defaults to the output path with `.csv` appended.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 256)]
    outputs: usize,
    #[arg(long, default_value_t = 4096)]
    fan_in: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BennError::io(dir, e))
}

fn command_line() -> Vec<String> {
    std::env::args().collect()
}

fn train(args: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let (train, test) = args.data.load(args.seed)?;
    let cfg = args.model.config(&train)?;
    let mut trainer = Trainer::new(Network::new(&cfg, args.seed)?, args.schedule.config(args.seed)?);
    let all: Vec<usize> = (0..train.len()).collect();
    let mut rows = Vec::new();
    while !trainer.finished() {
        let stats = trainer.run_epoch(&train, &all, None)?;
        let test_accuracy = test.as_ref().map(|t| accuracy(trainer.network(), t)).transpose()?;
        rows.push(TrainRow {
            epoch: stats.epoch,
            loss: stats.loss,
            train_accuracy: stats.train_accuracy,
            test_accuracy,
        });
    }
    create_dir(&args.out)?;
    let ckpt = args.out.join("model.ckpt");
    let metrics = args.out.join("metrics.csv");
    save_checkpoint(trainer.network(), &ckpt)?;
    write_csv(&metrics, &rows)?;
    if let Some(last) = rows.last() {
        println!("epoch {} loss {:.4} train {:.4} test {:?}", last.epoch, last.loss, last.train_accuracy, last.test_accuracy);
    }
    let mut manifest = RunManifest::new(command_line());
    manifest.config_sha256 = Some(sha256_hex(cfg.to_text().as_bytes()));
    manifest.seeds = vec![args.seed];
    manifest.outputs = vec![ckpt, metrics];
    manifest.elapsed_secs = started.elapsed().as_secs_f64();
    manifest.save(&args.out)
}

fn ensemble(args: EnsembleArgs) -> Result<()> {
    let started = Instant::now();
    let (train, test) = args.data.load(args.seed)?;
    let cfg = args.model.config(&train)?;
    let ens = EnsembleConfig {
        k: args.k,
        strategy: args.strategy.parse::<Strategy>()?,
        mode: args.mode.parse::<TrainingMode>()?,
        rule: args.rule.parse::<Rule>()?,
        reweight_gradients: args.reweight_gradients,
        train: args.schedule.config(args.seed)?,
        seed: args.seed,
    };
    let mut run = train_ensemble(&cfg, &train, test.as_ref(), &ens)?;
    run.model.uniform = args.uniform_alpha;
    let manifest = save_ensemble(&run.model, args.k, &args.out)?;
    let rows: Vec<EnsembleRow> = run
        .reports
        .iter()
        .map(|r| EnsembleRow {
            member: r.round,
            seed: r.seed,
            accepted: r.accepted,
            alpha: r.alpha,
            weighted_error: r.weighted_error,
            member_test_accuracy: r.member_test_accuracy,
            ensemble_test_accuracy: r.ensemble_test_accuracy,
        })
        .collect();
    let metrics = args.out.join("metrics.csv");
    write_csv(&metrics, &rows)?;
    let alphas: Vec<String> = manifest.members.iter().map(|m| format!("{:.4}", m.alpha)).collect();
    println!("{} members, alpha [{}]", manifest.members.len(), alphas.join(", "));
    if let Some(acc) = run.reports.iter().rev().find_map(|r| r.ensemble_test_accuracy) {
        println!("ensemble test accuracy {acc:.4}");
    }
    let mut rm = RunManifest::new(command_line());
    rm.config_sha256 = Some(manifest.config_sha256.clone());
    rm.seeds = run.reports.iter().map(|r| r.seed).collect();
    rm.outputs = vec![args.out.join(benn::store::ENSEMBLE_MANIFEST), metrics];
    rm.elapsed_secs = started.elapsed().as_secs_f64();
    rm.save(&args.out)
}

/// Anything `eval` and `perturb` can load.
enum Model {
    Single(Network),
    Ensemble(EnsembleModel),
}

impl Model {
    fn load(path: &Path) -> Result<Self> {
        if is_ensemble_dir(path) {
            return Ok(Model::Ensemble(load_ensemble(path)?));
        }
        Ok(Model::Single(load_network(path)?))
    }

    fn predict(&self, data: &Dataset) -> Result<Vec<usize>> {
        Ok(match self {
            Model::Single(n) => predict(n, data)?,
            Model::Ensemble(m) => m.predict(data)?.labels,
        })
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let data = args.data.load_eval(args.seed)?;
    let pred = model.predict(&data)?;
    let acc = benn_core::nn::fraction_correct(&pred, data.labels());
    println!("accuracy {acc:.6} ({} examples)", data.len());
    if let Some(out) = &args.out {
        create_dir(out)?;
        write(&out.join("confusion.csv"), &confusion_csv(&pred, data.labels(), data.classes())?)?;
    }
    Ok(())
}

fn perturb(args: PerturbArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let data = args.data.load_eval(args.seed)?;
    let target: Target = args.target.parse()?;
    let mut rows = Vec::new();
    for &sigma2 in &args.sigma2 {
        let spec = PerturbationSpec { target, sigma2, trials: args.trials, seed: args.seed };
        let est = match &model {
            Model::Single(n) => robustness_trained(n, &data, &spec, args.eval_batch)?,
            Model::Ensemble(m) => robustness_trained(m, &data, &spec, args.eval_batch)?,
        };
        println!("sigma2 {sigma2}: {:.6e} ± {:.2e}", est.mean, est.std_err);
        rows.push(PerturbRow {
            sigma2,
            target: target.to_string(),
            metric: "error_change_sq".into(),
            estimate: est.mean,
            std_err: est.std_err,
            trials: args.trials,
        });
    }
    write_csv(&args.out, &rows)
}

fn b_table_cmd(args: BTableArgs) -> Result<()> {
    let rows: Vec<BTableRow> = b_table(&args.sigmas, args.mc_samples, args.seed)?
        .into_iter()
        .map(|r| BTableRow {
            sigma: r.sigma,
            b: r.b,
            r: r.r,
            b_over_r: r.b_over_r(),
            b_monte_carlo: r.monte_carlo.mean,
            b_mc_std_err: r.monte_carlo.std_err,
        })
        .collect();
    for r in &rows {
        println!("σ={:<6} B={:.4} R={:.6} B/R={:.2}", r.sigma, r.b, r.r, r.b_over_r);
    }
    write_csv(&args.out, &rows)
}

fn theorem1_cmd(args: Theorem1Args) -> Result<()> {
    let mut rows = Vec::new();
    for (i, &sigma) in args.sigmas.iter().enumerate() {
        let seed = benn_core::rng::mix(args.seed, i as u64);
        let rep = verify_theorem1(args.fan_in, args.sigma_w, sigma, &args.ks, args.trials, seed)?;
        for r in &rep.rows {
            rows.push(Theorem1Row {
                sigma,
                regime: r.regime.to_string(),
                k: r.k,
                measured: r.measured,
                std_err: r.std_err,
                closed_form: r.closed_form,
                rel_error: r.rel_error(),
            });
        }
        println!(
            "σ={sigma}: B={:.4} thresholds B/R={:.2} 1/σw²={:.2} B/(Rσw²)={:.2}",
            rep.b,
            rep.activation_threshold(),
            rep.weight_threshold(),
            rep.both_threshold()
        );
    }
    write_csv(&args.out, &rows)
}

fn theorem2_cmd(args: Theorem2Args) -> Result<()> {
    let mut rows = Vec::new();
    for (i, &depth) in args.depths.iter().enumerate() {
        let mut widths = vec![args.width; depth];
        widths.push(1);
        let seed = benn_core::rng::mix(args.seed, i as u64);
        for c in verify_theorem2(&widths, args.sigma_w, args.sigma, args.trials, args.samples_per_trial, seed)? {
            println!("L={depth} {:<13} bound {:.3} measured {:.3} satisfied {:.4}", c.regime, c.bound, c.measured.mean, c.satisfaction_rate);
            rows.push(Theorem2Row {
                depth,
                regime: c.regime.to_string(),
                bound: c.bound,
                mean_measured: c.measured.mean,
                std_err: c.measured.std_err,
                satisfaction_rate: c.satisfaction_rate,
                trials: c.trials,
            });
        }
    }
    write_csv(&args.out, &rows)
}

fn export(args: ExportArgs) -> Result<()> {
    let net = load_checkpoint(&args.model)?;
    if net.binary_layers().next().is_none() {
        return Err(BennError::Format("network has no binary layers to pack".into()));
    }
    let float_bytes = checkpoint_bytes(&net).len() as u64;
    let packed = export_bytes(&net);
    write(&args.out, &packed)?;
    let row = ExportRow {
        float_bytes,
        packed_bytes: packed.len() as u64,
        ratio: packed.len() as f64 / float_bytes as f64,
    };
    println!("float {} bytes, packed {} bytes, ratio {:.4} ({:.1}x smaller)", row.float_bytes, row.packed_bytes, row.ratio, 1.0 / row.ratio);
    let report = args.report.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".csv");
        p.into()
    });
    write_csv(&report, &[row])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Ensemble { command: EnsembleCommand::Train(a) } => ensemble(a),
        Command::Eval(a) => eval(a),
        Command::Perturb(a) => perturb(a),
        Command::Analyze { command } => match command {
            AnalyzeCommand::BTable(a) => b_table_cmd(a),
            AnalyzeCommand::Theorem1(a) => theorem1_cmd(a),
            AnalyzeCommand::Theorem2(a) => theorem2_cmd(a),
        },
        Command::Export(a) => export(a),
        Command::Bench(a) => {
            let t = benn::experiments::kernel_speedup(a.outputs, a.fan_in, a.batch, a.reps, a.seed)?;
            println!(
                "{}x{} by {}x{}: float {:.3} s, packed {:.3} s, speedup {:.1}x",
                a.outputs, a.fan_in, a.batch, a.fan_in, t.float_secs, t.packed_secs, t.speedup()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
