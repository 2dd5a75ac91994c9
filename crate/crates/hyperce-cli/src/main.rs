//! `hyperce` — command-line workbench for pilot-aided OFDM channel
//! estimation: dataset generation, parameter annotation, estimator
//! training, benchmark sweeps, and report rendering.
//!
//! Exit codes: 0 on success, 1 on argument/validation errors (including
//! unknown flags), 2 on I/O failures. Every run logs its fully resolved
//! configuration as JSON (stderr, `info` level) so results can be
//! reproduced from the log alone.

mod selftest;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hyperce_core::benchmark::{build_train_samples, run_benchmark, BenchmarkOptions, EstimatorKind, EstimatorSpec};
use hyperce_core::dataset::{annotate_est_params, default_sweep, generate_dataset, DatasetReader, DatasetSample, ScenarioSweep};
use hyperce_core::grid::default_numerology;
use hyperce_core::model::{train, Model, ModelConfig, TrainConfig};
use hyperce_core::nn::Checkpoint;
use hyperce_core::report::{read_csv, write_csv, write_svg};
use hyperce_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hyperce",
    version,
    about = "Pilot-aided OFDM channel estimation workbench",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a channel-estimation dataset.
    Gen(GenArgs),
    /// Annotate a dataset in place with TRS-estimated channel parameters.
    EstimateParams(EstimateParamsArgs),
    /// Train a learned estimator and save its checkpoint.
    Train(TrainArgs),
    /// Evaluate estimators over a dataset and emit a CSV report.
    #[command(visible_alias = "eval")]
    Bench(BenchArgs),
    /// Render a CSV report as an SVG figure.
    Report(ReportArgs),
    /// Run the built-in verification suite.
    Selftest,
}

#[derive(Args)]
struct GenArgs {
    /// Samples per sweep configuration.
    #[arg(long, default_value_t = 64)]
    per_config: usize,
    /// Dataset seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset path.
    #[arg(long, default_value = "dataset.ceds")]
    out: PathBuf,
    /// Override the sweep's delay spread in seconds (e.g. 100e-9).
    #[arg(long)]
    delay_spread: Option<f64>,
    /// JSON file with a custom scenario sweep (defaults to the built-in
    /// 3 profiles x 3 Dopplers x 11 SNRs grid).
    #[arg(long)]
    sweep: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateParamsArgs {
    /// Dataset to annotate in place.
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Estimator preset (UNET_BILINEAR, HYPERCE_BILINEAR, HYPERCE_WN,
    /// HYPERCE_WN_CA) or path to a JSON training configuration.
    #[arg(long)]
    config: String,
    /// Training dataset (annotated with estimated parameters).
    #[arg(long)]
    dataset: PathBuf,
    /// Passes over the training split.
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Samples per optimizer step.
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Weight-initialization and training seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Condition on generator-truth parameters instead of TRS estimates.
    #[arg(long)]
    oracle_params: bool,
    /// Evaluate validation NMSE after every epoch (slower).
    #[arg(long)]
    track_val: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset to evaluate over.
    #[arg(long)]
    dataset: PathBuf,
    /// Estimators to run: registry labels, learned ones as
    /// LABEL=checkpoint path. Comma-separated or repeated.
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<String>,
    /// Write the CSV report here (stdout if omitted).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Evaluate only this dataset split.
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    split: SplitArg,
    /// Feed generator-truth parameters instead of TRS estimates.
    #[arg(long)]
    oracle_params: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum SplitArg {
    All,
    Train,
    Val,
}

#[derive(Args)]
struct ReportArgs {
    /// Input CSV report.
    #[arg(long)]
    input: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

/// Architecture plus initialization choice for training, as stored in JSON
/// training configurations.
#[derive(serde::Serialize, serde::Deserialize)]
struct TrainArchConfig {
    model: ModelConfig,
    init: InitKind,
}

#[derive(Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
enum InitKind {
    Bilinear,
    Wiener,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outcomes; anything else is a
            // usage problem.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();

    let result = match cli.command {
        Command::Gen(args) => run_gen(&args),
        Command::EstimateParams(args) => run_estimate_params(&args),
        Command::Train(args) => run_train(&args),
        Command::Bench(args) => run_bench(&args),
        Command::Report(args) => run_report(&args),
        Command::Selftest => selftest::run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Log the fully resolved configuration of a run as a single JSON line.
fn log_config(command: &str, config: &serde_json::Value) {
    let line = json!({ "command": command, "config": config });
    log::info!("resolved config: {line}");
}

fn run_gen(args: &GenArgs) -> Result<()> {
    let mut sweep: ScenarioSweep = match &args.sweep {
        Some(path) => serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::Format(format!("sweep file {}: {e}", path.display())))?,
        None => default_sweep(),
    };
    if let Some(ds) = args.delay_spread {
        sweep.delay_spread_s = ds;
    }
    let num = default_numerology();
    log_config(
        "gen",
        &json!({
            "per_config": args.per_config,
            "seed": args.seed,
            "out": args.out,
            "sweep": sweep,
            "numerology": num,
        }),
    );
    let manifest = generate_dataset(&sweep, args.per_config, &args.out, args.seed, &num)?;
    log::info!(
        "generated {} samples over {} configurations ({} train / {} val)",
        manifest.n_samples,
        manifest.sweep.configs().len(),
        manifest.train_indices.len(),
        manifest.val_indices.len()
    );
    println!(
        "wrote {} samples to {}",
        manifest.n_samples,
        args.out.display()
    );
    Ok(())
}

fn run_estimate_params(args: &EstimateParamsArgs) -> Result<()> {
    log_config("estimate-params", &json!({ "dataset": args.dataset }));
    let count = annotate_est_params(&args.dataset)?;
    println!(
        "annotated {} samples in {}",
        count,
        args.dataset.display()
    );
    Ok(())
}

/// Resolve `--config` into an architecture and initialization choice.
///
/// Registry labels map to their canonical architecture; anything else must
/// be a JSON file with `{"model": {...}, "init": "bilinear"|"wiener"}`.
fn resolve_train_config(spec: &str) -> Result<(TrainArchConfig, String)> {
    if let Ok(kind) = EstimatorKind::parse(spec) {
        let model = kind.model_config().ok_or_else(|| {
            Error::InvalidConfig(format!("estimator {spec} is not trainable"))
        })?;
        let init = if kind.wiener_init() {
            InitKind::Wiener
        } else {
            InitKind::Bilinear
        };
        return Ok((TrainArchConfig { model, init }, spec.to_string()));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::InvalidConfig(format!(
            "--config {spec:?} is neither a known estimator label nor an existing file"
        )));
    }
    let cfg: TrainArchConfig = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Format(format!("training config {spec}: {e}")))?;
    cfg.model.validate()?;
    Ok((cfg, spec.to_string()))
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let (arch, label) = resolve_train_config(&args.config)?;
    let tc = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: args.seed,
    };
    log_config(
        "train",
        &json!({
            "config": label,
            "model": arch.model,
            "init": arch.init,
            "dataset": args.dataset,
            "epochs": tc.epochs,
            "batch": tc.batch_size,
            "lr": tc.learning_rate,
            "seed": tc.seed,
            "out": args.out,
            "oracle_params": args.oracle_params,
            "track_val": args.track_val,
        }),
    );

    let mut reader = DatasetReader::open(&args.dataset)?;
    let manifest = reader.manifest().clone();
    let samples = reader.load_all()?;
    let wiener = arch.init == InitKind::Wiener;
    let train_set = build_train_samples(
        &manifest.numerology,
        &samples,
        &manifest.train_indices,
        wiener,
        args.oracle_params,
    )?;
    let val_set = if args.track_val {
        build_train_samples(
            &manifest.numerology,
            &samples,
            &manifest.val_indices,
            wiener,
            args.oracle_params,
        )?
    } else {
        Vec::new()
    };
    log::info!(
        "training on {} samples ({} validation tracked)",
        train_set.len(),
        val_set.len()
    );

    let mut model = Model::new(arch.model, args.seed)?;
    let report = train(&mut model, &train_set, &val_set, &tc)?;
    let ckpt = model.to_checkpoint(report.steps, Some(&report.optimizer));
    ckpt.save(&args.out)?;

    let final_loss = report
        .history
        .last()
        .map(|s| s.train_loss)
        .unwrap_or(f64::NAN);
    println!(
        "trained {label} for {} epochs ({} steps), final train loss {final_loss:.6}; \
         checkpoint {}",
        args.epochs,
        report.steps,
        args.out.display()
    );
    Ok(())
}

/// Parse one `--models` entry: a registry label, or LABEL=checkpoint.
fn parse_model_spec(spec: &str) -> Result<EstimatorSpec> {
    let (label, path) = match spec.split_once('=') {
        Some((label, path)) => (label, Some(path)),
        None => (spec, None),
    };
    let kind = EstimatorKind::parse(label)?;
    match (kind.model_config(), path) {
        (None, None) => EstimatorSpec::classical(kind),
        (None, Some(_)) => Err(Error::InvalidConfig(format!(
            "estimator {label} does not take a checkpoint"
        ))),
        (Some(_), None) => Err(Error::InvalidConfig(format!(
            "estimator {label} needs a checkpoint: {label}=<path>"
        ))),
        (Some(config), Some(path)) => {
            let ckpt = Checkpoint::load(Path::new(path))?;
            let (model, _) = Model::from_checkpoint(config, &ckpt)?;
            EstimatorSpec::with_model(kind, model)
        }
    }
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    log_config(
        "bench",
        &json!({
            "dataset": args.dataset,
            "models": args.models,
            "report": args.report,
            "split": args.split,
            "oracle_params": args.oracle_params,
        }),
    );
    let estimators: Vec<EstimatorSpec> = args
        .models
        .iter()
        .map(|s| parse_model_spec(s))
        .collect::<Result<_>>()?;

    let mut reader = DatasetReader::open(&args.dataset)?;
    let manifest = reader.manifest().clone();
    let samples = reader.load_all()?;
    let subset: Vec<DatasetSample> = match args.split {
        SplitArg::All => samples,
        SplitArg::Train => pick(&samples, &manifest.train_indices)?,
        SplitArg::Val => pick(&samples, &manifest.val_indices)?,
    };
    log::info!(
        "evaluating {} estimators over {} samples",
        estimators.len(),
        subset.len()
    );

    let options = BenchmarkOptions {
        oracle_params: args.oracle_params,
    };
    let table = run_benchmark(&manifest, &subset, &estimators, &options)?;
    match &args.report {
        Some(path) => {
            write_csv(&table, BufWriter::new(File::create(path)?))?;
            println!("wrote {} rows to {}", table.rows.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            write_csv(&table, stdout.lock())?;
        }
    }
    Ok(())
}

fn pick(samples: &[DatasetSample], indices: &[usize]) -> Result<Vec<DatasetSample>> {
    indices
        .iter()
        .map(|&i| {
            samples.get(i).cloned().ok_or_else(|| {
                Error::Format(format!(
                    "split index {i} out of range for {} samples",
                    samples.len()
                ))
            })
        })
        .collect()
}

fn run_report(args: &ReportArgs) -> Result<()> {
    log_config(
        "report",
        &json!({ "input": args.input, "out": args.out }),
    );
    let table = read_csv(BufReader::new(File::open(&args.input)?))?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    write_svg(&table, &mut out)?;
    out.flush()?;
    println!(
        "rendered {} rows to {}",
        table.rows.len(),
        args.out.display()
    );
    Ok(())
}
