//! The `ffm` command-line tool.
//!
//! Every command writes its outputs and a `run_manifest.json` into
//! `--out-dir`. The manifest holds the fully resolved command, so
//! `ffm replay <manifest>` reruns it with identical results (single thread).
//!
//! Exit codes: 2 for configuration errors, 3 for data errors, 4 for
//! numerical failures.

use std::fs::{self, File};
use std::hint::black_box;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::data::{
    format_example, gen_synthetic, read_block_index, read_examples, read_examples_with_offsets, write_block_index,
    BlockedDataset, RollingWindow, SynthSpec,
};
use crate::error::{Error, Result};
use crate::ipm::{save_sweep_csv, sweep, IpmConfig, IpmVariant};
use crate::metrics::{metric_report, BootstrapConfig, EvalRecord, ReportOptions, DEFAULT_BETAS};
use crate::model::{FeatureVector, FfmModel, ModelConfig};
use crate::trainer::{train, TrainOptions, DEFAULT_MAX_EPOCHS};
use crate::warm_start::{compare_reports, run_rolling, write_delta_csv, write_rolling_csv, Comparison, RollingPlan, Seeding};

pub const MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "ffm", version, about = "Field-aware factorization machines: training, IPM simulation, warm-start experiments, metrics")]
pub struct Cli {
    /// Directory for all outputs and the run manifest.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Worker threads for training and evaluation.
    #[arg(long, global = true, env = "FFM_THREADS", default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Train a model with early stopping.
    Train(TrainArgs),
    /// Metric report (log loss, NLL, Utility, bootstrap CIs) as JSON.
    Eval(EvalArgs),
    /// Write predictions, or benchmark prediction cost against k.
    Predict(PredictArgs),
    /// Sweep iterative parameter mixing over machine counts and learning rates.
    IpmSim(IpmArgs),
    /// Rolling re-training with cold, naive, pre-mature or online seeding.
    Rolling(RollingArgs),
    /// Cut a data file into blocks and write the block index.
    Split(SplitArgs),
    /// Generate a planted-FFM data set with drift.
    GenSynth(SynthArgs),
    /// Rerun a command from its run manifest.
    Replay(ReplayArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Predict(_) => "predict",
            Command::IpmSim(_) => "ipm-sim",
            Command::Rolling(_) => "rolling",
            Command::Split(_) => "split",
            Command::GenSynth(_) => "gen-synth",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Ffm,
    LrCross,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Number of fields per example.
    #[arg(long)]
    pub fields: usize,
    /// Latent dimension (ignored for lr-cross).
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Hash space: number of rows.
    #[arg(long, default_value_t = 1 << 20)]
    pub d: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub init_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = KindArg::Ffm)]
    pub model_kind: KindArg,
    #[arg(long, default_value_t = DEFAULT_MAX_EPOCHS)]
    pub max_epochs: usize,
}

impl ModelArgs {
    fn config(&self, eta: f64) -> Result<ModelConfig> {
        let base = match self.model_kind {
            KindArg::Ffm => ModelConfig::ffm(self.fields, self.k, self.d),
            KindArg::LrCross => ModelConfig::lr_cross(self.fields, self.d),
        };
        let config = base
            .with_learning_rate(eta)
            .with_l2(self.lambda)
            .with_init_scale(self.init_scale)
            .with_seed(self.seed);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.2)]
    pub eta: f64,
    /// Start from this model file instead of a random one.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Also write the pre-mature snapshot as `premature.ffm`.
    #[arg(long)]
    pub save_premature: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub fields: usize,
    #[arg(long, required_unless_present = "constant")]
    pub model: Option<PathBuf>,
    /// Score every example with this probability instead of a model.
    #[arg(long, conflicts_with = "model")]
    pub constant: Option<f64>,
    /// Utility β; repeat for several. Defaults to 10 and 1000 when the data carries cost and reward.
    #[arg(long = "beta")]
    pub betas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.90)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub bootstrap_seed: u64,
    /// Skip bootstrap intervals.
    #[arg(long)]
    pub no_ci: bool,
    /// Do not multiply Utility contributions by example weights.
    #[arg(long)]
    pub unweighted_utility: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long, required_unless_present = "bench")]
    pub model: Option<PathBuf>,
    #[arg(long, required_unless_present = "bench")]
    pub data: Option<PathBuf>,
    /// Time predictions for each k instead; writes `bench.csv`.
    #[arg(long)]
    pub bench: bool,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub bench_k: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    pub bench_fields: usize,
    #[arg(long, default_value_t = 4096)]
    pub bench_d: usize,
    #[arg(long, default_value_t = 20_000)]
    pub bench_n: usize,
    #[arg(long, default_value_t = 5)]
    pub bench_repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Naive,
    Improved,
    Both,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct IpmArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub machines: Vec<usize>,
    #[arg(long, value_enum, default_value_t = VariantArg::Improved)]
    pub variant: VariantArg,
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedingArg {
    Cold,
    Naive,
    Premature,
    /// Naive seeding on a single training block.
    Online,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RollingArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.2)]
    pub eta: f64,
    /// Block index written by `split` or `gen-synth`; otherwise `--blocks` even blocks.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value_t = 90)]
    pub blocks: usize,
    /// Training blocks in the window.
    #[arg(long, default_value_t = 44)]
    pub window: usize,
    #[arg(long, default_value_t = 1)]
    pub val_blocks: usize,
    #[arg(long, default_value_t = 1)]
    pub test_blocks: usize,
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    /// Seeding mode; repeat to run several plans.
    #[arg(long, value_enum, default_values_t = [SeedingArg::Premature])]
    pub seeding: Vec<SeedingArg>,
    /// Most recent blocks trained on after the first step (default: the whole window).
    #[arg(long)]
    pub train_blocks: Option<usize>,
    #[arg(long)]
    pub reset_adagrad: bool,
    /// Do not run the cold full-window baseline.
    #[arg(long)]
    pub no_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub fields: usize,
    #[arg(long, default_value_t = 90)]
    pub blocks: usize,
    /// Index file name inside the output directory.
    #[arg(long, default_value = "blocks.csv")]
    pub index: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub fields: usize,
    #[arg(long, default_value_t = 100)]
    pub card: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0.0)]
    pub drift: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Total number of examples.
    #[arg(long, default_value_t = 90_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1.5)]
    pub score_scale: f64,
    #[arg(long, default_value_t = -1.2, allow_hyphen_values = true)]
    pub bias: f64,
    #[arg(long, default_value_t = 2.0)]
    pub skew: f64,
    /// Output file name inside the output directory; `.gz` compresses.
    #[arg(long, default_value = "synth.ffm")]
    pub out: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub out_dir: PathBuf,
    pub threads: usize,
    pub args: Command,
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if let Command::Replay(r) = &cli.command {
        let manifest: RunManifest = serde_json::from_reader(File::open(&r.manifest)?)?;
        if matches!(manifest.args, Command::Replay(_)) {
            return Err(Error::config("a manifest cannot replay another replay"));
        }
        return run(Cli {
            out_dir: cli.out_dir.or(Some(manifest.out_dir)),
            threads: manifest.threads,
            command: manifest.args,
        });
    }
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let threads = cli.threads.max(1);
    fs::create_dir_all(&out_dir)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command.name().to_string(),
        out_dir: out_dir.clone(),
        threads,
        args: cli.command.clone(),
    };
    fs::write(out_dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    match &cli.command {
        Command::Train(a) => cmd_train(a, &out_dir, threads),
        Command::Eval(a) => cmd_eval(a, &out_dir),
        Command::Predict(a) => cmd_predict(a, &out_dir),
        Command::IpmSim(a) => cmd_ipm(a, &out_dir, threads),
        Command::Rolling(a) => cmd_rolling(a, &out_dir, threads),
        Command::Split(a) => cmd_split(a, &out_dir),
        Command::GenSynth(a) => cmd_gen_synth(a, &out_dir),
        Command::Replay(_) => unreachable!("handled above"),
    }
}

fn cmd_train(a: &TrainArgs, out: &Path, threads: usize) -> Result<()> {
    let config = a.model.config(a.eta)?;
    let train_set = read_examples(&a.data, config.num_fields)?;
    let val = read_examples(&a.val, config.num_fields)?;
    let seed = match &a.init {
        Some(path) => {
            let mut m = FfmModel::load(path)?;
            if m.config().num_fields != config.num_fields {
                return Err(Error::config("initial model has a different number of fields"));
            }
            m.set_learning_rate(a.eta)?;
            m
        }
        None => FfmModel::new(config)?,
    };
    let report = train(seed, &train_set, &val, &TrainOptions::new(a.model.max_epochs).with_threads(threads))?;
    report.mature_model.save(out.join("model.ffm"))?;
    if a.save_premature {
        report.premature_model.save(out.join("premature.ffm"))?;
    }
    report.save_progress_csv(out.join("progress.csv"))?;
    println!(
        "epochs={} best_epoch={} best_val_ll={:.6} mature_epoch={}",
        report.stop_epoch,
        report.epochs_to_best(),
        report.best_val_loss(),
        report.mature_epoch()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &Path) -> Result<()> {
    let data = read_examples(&a.data, a.fields)?;
    let records: Vec<EvalRecord> = match (&a.model, a.constant) {
        (_, Some(p)) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config("--constant must be a probability"));
            }
            data.iter().map(|x| EvalRecord::from_example(p, x)).collect()
        }
        (Some(path), None) => {
            let model = FfmModel::load(path)?;
            crate::metrics::score_examples(&model, &data)?
        }
        (None, None) => return Err(Error::config("either --model or --constant is required")),
    };
    let has_values = records.iter().all(|r| r.cost.is_some() && r.reward.is_some());
    let betas = if !a.betas.is_empty() {
        a.betas.clone()
    } else if has_values {
        DEFAULT_BETAS.to_vec()
    } else {
        Vec::new()
    };
    let opts = ReportOptions {
        betas,
        bootstrap: (!a.no_ci).then_some(BootstrapConfig {
            resamples: a.resamples,
            level: a.level,
            seed: a.bootstrap_seed,
        }),
        weighted_utility: !a.unweighted_utility,
    };
    let report = metric_report(&records, &opts)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(out.join("metrics.json"), json.clone() + "\n")?;
    println!("{json}");
    Ok(())
}

/// Mean wall time of one prediction for a model with latent dimension `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub k: usize,
    pub ns_per_prediction: f64,
}

/// Times `predict_proba` over `n` synthetic examples for each `k`, keeping
/// the fastest of `repeats` passes.
pub fn bench_prediction(ks: &[usize], fields: usize, d: usize, n: usize, repeats: usize) -> Result<Vec<BenchRow>> {
    let spec = SynthSpec {
        num_fields: fields,
        cardinality: 1000,
        ..SynthSpec::default()
    };
    let data = gen_synthetic(&spec, n.max(1));
    ks.iter()
        .map(|&k| {
            let model = FfmModel::new(ModelConfig::ffm(fields, k, d).with_seed(1))?;
            let mut best = f64::INFINITY;
            for _ in 0..repeats.max(1) {
                let started = Instant::now();
                let mut acc = 0.0;
                for x in &data {
                    acc += model.predict_proba(black_box(x))?;
                }
                black_box(acc);
                best = best.min(started.elapsed().as_secs_f64());
            }
            Ok(BenchRow {
                k,
                ns_per_prediction: best * 1e9 / data.len() as f64,
            })
        })
        .collect()
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

fn cmd_predict(a: &PredictArgs, out: &Path) -> Result<()> {
    if a.bench {
        let rows = bench_prediction(&a.bench_k, a.bench_fields, a.bench_d, a.bench_n, a.bench_repeats)?;
        let mut w = csv::Writer::from_path(out.join("bench.csv"))?;
        w.write_record(["k", "ns_per_prediction"])?;
        for r in &rows {
            w.write_record([r.k.to_string(), r.ns_per_prediction.to_string()])?;
            println!("k={:<3} {:>10.1} ns/prediction", r.k, r.ns_per_prediction);
        }
        w.flush()?;
        if rows.len() >= 2 {
            let xs: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.ns_per_prediction).collect();
            let (slope, intercept, r2) = linear_fit(&xs, &ys);
            println!("fit: {slope:.2} ns per latent factor + {intercept:.1} ns, R^2 = {r2:.4}");
        }
        return Ok(());
    }
    let (Some(model_path), Some(data_path)) = (&a.model, &a.data) else {
        return Err(Error::config("--model and --data are required without --bench"));
    };
    let model = FfmModel::load(model_path)?;
    let data = read_examples(data_path, model.config().num_fields)?;
    let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
    w.write_record(["prob", "label"])?;
    for x in &data {
        w.write_record([model.predict_proba(x)?.to_string(), u8::from(x.label).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_ipm(a: &IpmArgs, out: &Path, threads: usize) -> Result<()> {
    let config = a.model.config(a.eta.first().copied().unwrap_or(0.2))?;
    let train_set = read_examples(&a.data, config.num_fields)?;
    let val = read_examples(&a.val, config.num_fields)?;
    let variants: &[IpmVariant] = match a.variant {
        VariantArg::Naive => &[IpmVariant::Naive],
        VariantArg::Improved => &[IpmVariant::Improved],
        VariantArg::Both => &[IpmVariant::Naive, IpmVariant::Improved],
    };
    let mut configs = Vec::new();
    for &eta in &a.eta {
        for &variant in variants {
            for &m in &a.machines {
                configs.push(IpmConfig::new(m, variant, eta).with_max_epochs(a.model.max_epochs).with_threads(threads));
            }
        }
    }
    let rows = sweep(&configs, &FfmModel::new(config)?, &train_set, &val)?;
    save_sweep_csv(&rows, out.join("ipm_sweep.csv"))?;
    crate::ipm::write_sweep_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}

fn cmd_rolling(a: &RollingArgs, out: &Path, threads: usize) -> Result<()> {
    let config = a.model.config(a.eta)?;
    let blocked = match &a.index {
        Some(index) => {
            let examples = read_examples(&a.data, config.num_fields)?;
            BlockedDataset::from_index(examples, &read_block_index(index)?, config.num_fields)?
        }
        None => BlockedDataset::split_blocks(read_examples(&a.data, config.num_fields)?, a.blocks, config.num_fields)?,
    };
    let window = RollingWindow {
        train_blocks: a.window,
        val_blocks: a.val_blocks,
        test_blocks: a.test_blocks,
        step: a.step,
    };
    let base = |seeding| RollingPlan::new(window, seeding).with_max_epochs(a.model.max_epochs).with_threads(threads);
    let plans: Vec<RollingPlan> = a
        .seeding
        .iter()
        .map(|s| match s {
            SeedingArg::Online => base(Seeding::Naive).with_train_size(1),
            other => {
                let seeding = match other {
                    SeedingArg::Cold => Seeding::Cold,
                    SeedingArg::Naive => Seeding::Naive,
                    _ => Seeding::Premature,
                };
                base(seeding)
                    .with_train_size(a.train_blocks.unwrap_or(a.window))
                    .with_reset_adagrad(a.reset_adagrad)
            }
        })
        .collect();
    let reports = plans
        .iter()
        .map(|p| run_rolling(p, &blocked, &config))
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        println!(
            "{:<14} steps={} total_epochs={} mean_test_ll={:.6} s/epoch={:.4} total_s={:.2}",
            r.plan.label(),
            r.steps.len(),
            r.total_epochs(),
            r.test_lls().iter().sum::<f64>() / r.steps.len() as f64,
            r.mean_seconds_per_epoch(),
            r.total_seconds()
        );
    }
    if a.no_baseline {
        return write_rolling_csv(&reports, File::create(out.join("rolling_report.csv"))?);
    }
    let baseline = run_rolling(&base(Seeding::Cold), &blocked, &config)?;
    let deltas = compare_reports(&baseline, &reports, &BootstrapConfig::default())?;
    for d in &deltas {
        let ci = d.ci.map(|(lo, hi)| format!(" [{lo:.6}, {hi:.6}]")).unwrap_or_default();
        println!("{:<14} mean delta vs cold({}) = {:+.6}{ci}", d.plan, a.window, d.mean);
    }
    let cmp = Comparison {
        baseline,
        reports,
        deltas,
    };
    write_rolling_csv(std::iter::once(&cmp.baseline).chain(&cmp.reports), File::create(out.join("rolling_report.csv"))?)?;
    write_delta_csv(&cmp, File::create(out.join("delta_vs_baseline.csv"))?)
}

fn cmd_split(a: &SplitArgs, out: &Path) -> Result<()> {
    let (examples, offsets): (Vec<FeatureVector>, Vec<u64>) = read_examples_with_offsets(&a.data, a.fields)?.into_iter().unzip();
    let blocked = BlockedDataset::split_with_offsets(examples, Some(&offsets), a.blocks, a.fields)?;
    blocked.write_index(out.join(&a.index))?;
    println!("{} examples in {} blocks", blocked.examples().len(), blocked.n_blocks());
    Ok(())
}

fn cmd_gen_synth(a: &SynthArgs, out: &Path) -> Result<()> {
    let spec = SynthSpec {
        num_fields: a.fields,
        cardinality: a.card,
        latent_dim: a.k,
        n_blocks: a.blocks,
        drift: a.drift,
        score_scale: a.score_scale,
        bias: a.bias,
        skew: a.skew,
        seed: a.seed,
    };
    if a.fields < 1 || a.card < 1 || a.k < 1 || a.blocks < 1 || a.blocks > a.n {
        return Err(Error::config("fields, card, k and blocks must be positive, with blocks <= n"));
    }
    let examples = gen_synthetic(&spec, a.n);
    let path = out.join(&a.out);
    let file = BufWriter::new(File::create(&path)?);
    let mut sink: Box<dyn Write> = if a.out.ends_with(".gz") {
        Box::new(GzEncoder::new(file, Compression::default()))
    } else {
        Box::new(file)
    };
    let mut offsets = Vec::with_capacity(examples.len());
    let mut offset = 0u64;
    let mut line = Vec::new();
    for x in &examples {
        line.clear();
        format_example(x, &mut line)?;
        line.push(b'\n');
        sink.write_all(&line)?;
        offsets.push(offset);
        offset += line.len() as u64;
    }
    sink.flush()?;
    drop(sink);
    let blocked = BlockedDataset::split_with_offsets(examples, Some(&offsets), a.blocks, a.fields)?;
    write_block_index(out.join("blocks.csv"), blocked.blocks())?;
    println!("wrote {} examples in {} blocks to {}", a.n, a.blocks, path.display());
    Ok(())
}
