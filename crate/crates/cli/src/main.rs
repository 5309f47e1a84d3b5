use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swag_core::eval::Method;
use swag_core::io::write_atomic;
use swag_core::nn::Activation;
use swag_core::trajectory::DeviationMode;
use swag_core::Result;
use swag_cli::config::{resolve, OUT_DIR_ENV};
use swag_cli::inspect::{render_inspect_csv, render_inspect_text};
use swag_cli::run::render_summary;
use swag_cli::{cmd_eval, cmd_export, cmd_gen, cmd_inspect, cmd_run, exit_code, exit_code_for};
use swag_cli::{GenConfig, RunOptions, RunOverrides};

#[derive(Parser)]
#[command(name = "swag", version, about = "SWA / SWAG experiments on soft-label classification data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic multi-annotator train/test datasets.
    Gen(GenArgs),
    /// Train per seed and score base, SWA and SWAG on the test set.
    Run(RunArgs),
    /// Show annotation vs. predicted distributions for chosen examples.
    Inspect(InspectArgs),
    /// Score stored predictions against a dataset.
    Eval(EvalArgs),
    /// Write a report's per-example records as CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// JSON generation config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: $SWAG_OUT_DIR/data, else ./data]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    num_train: Option<usize>,
    #[arg(long)]
    num_test: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Distance between class means.
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    annotators: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write test-shifted.jsonl, offset by this amount on every axis.
    #[arg(long, num_args = 0..=1, default_missing_value = "1.0")]
    domain_shift: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Option<Vec<u64>>,
    /// Run a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of deviation columns kept (K).
    #[arg(long)]
    rank_cap: Option<usize>,
    /// Posterior samples per prediction (N).
    #[arg(long)]
    num_samples: Option<usize>,
    /// Covariance scale applied when sampling.
    #[arg(long)]
    scale: Option<f64>,
    /// Sample from the diagonal part only.
    #[arg(long)]
    diag_only: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// First epoch (0-based) whose end-of-epoch weights are collected.
    #[arg(long)]
    swa_start: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    /// Comma-separated hidden layer widths; empty for a linear model.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    hidden: Option<Vec<usize>>,
    /// tanh or relu
    #[arg(long, value_parser = parse_activation)]
    activation: Option<Activation>,
    /// post-update or pre-update
    #[arg(long, value_parser = parse_mode)]
    deviation_mode: Option<DeviationMode>,
    /// Run directory [default: $SWAG_OUT_DIR/run-<config hash>, else ./runs/...]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    halt_after_epoch: Option<usize>,
}

#[derive(Args)]
struct InspectArgs {
    report: PathBuf,
    /// Example ids to show.
    #[arg(required = true)]
    example_ids: Vec<String>,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions as `{"example_id", "probs"}` JSONL, or a saved report.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "swag")]
    method: Method,
    #[arg(long, default_value = "unknown")]
    train_id: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of printing only the headline numbers.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    report: PathBuf,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    parse_enum(s)
}

fn parse_mode(s: &str) -> std::result::Result<DeviationMode, String> {
    parse_enum(s)
}

fn default_data_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(|d| PathBuf::from(d).join("data"))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn gen(args: GenArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => GenConfig::load(p)?,
        None => GenConfig::default(),
    };
    if let Some(v) = args.family {
        cfg.family = v;
    }
    if let Some(v) = args.num_train {
        cfg.synth.num_examples = v;
    }
    if let Some(v) = args.num_test {
        cfg.num_test = v;
    }
    if let Some(v) = args.num_classes {
        cfg.synth.num_classes = v;
    }
    if let Some(v) = args.feature_dim {
        cfg.synth.feature_dim = v;
    }
    if let Some(v) = args.separation {
        cfg.synth.cluster_separation = v;
    }
    if let Some(v) = args.annotators {
        cfg.synth.annotators = v;
    }
    if let Some(v) = args.seed {
        cfg.synth.seed = v;
    }
    if args.domain_shift.is_some() {
        cfg.domain_shift = args.domain_shift;
    }
    let out = args.out.unwrap_or_else(default_data_dir);
    for s in cmd_gen(&cfg, &out)? {
        println!("{}  ({})", s.line(), s.path.display());
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<i32> {
    let overrides = RunOverrides {
        train: args.train,
        test: args.test,
        seeds: args.seeds.or(args.seed.map(|s| vec![s])),
        rank_cap: args.rank_cap,
        num_samples: args.num_samples,
        scale: args.scale,
        diag_only: args.diag_only.then_some(true),
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        swa_start_epoch: args.swa_start,
        l2: args.l2,
        hidden: args.hidden,
        activation: args.activation,
        deviation_mode: args.deviation_mode,
        out: args.out,
    };
    let cfg = resolve(args.config.as_deref(), overrides)?;
    let outcome = cmd_run(
        &cfg,
        &RunOptions {
            halt_after_epoch: args.halt_after_epoch,
        },
    )?;
    println!("run directory: {}", outcome.out_dir.display());
    if let Some(s) = &outcome.summary {
        print!("{}", render_summary(std::slice::from_ref(s)));
    }
    if !outcome.halted.is_empty() {
        println!("halted seeds {:?}; rerun the same command to resume", outcome.halted);
    }
    for f in &outcome.failures {
        eprintln!("seed {} failed: {}", f.seed, f.message);
    }
    Ok(outcome.failures.first().map_or(0, |f| exit_code_for(f.kind)))
}

fn inspect(args: InspectArgs) -> Result<()> {
    let rows = cmd_inspect(&args.report, &args.example_ids)?;
    if args.csv {
        print!("{}", render_inspect_csv(&rows)?);
    } else {
        print!("{}", render_inspect_text(&rows));
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let report = cmd_eval(&args.predictions, &args.data, args.method, &args.train_id, args.seed)?;
    println!(
        "{} on {}: accuracy {:.4}, mean cross-entropy {:.4} over {} examples",
        report.method,
        report.test_set_id,
        report.accuracy,
        report.mean_cross_entropy,
        report.num_examples
    );
    if let Some(out) = args.out {
        report.save(&out)?;
    }
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let csv = cmd_export(&args.report)?;
    match args.out {
        Some(p) => write_atomic(Path::new(&p), csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<i32> = match cli.command {
        Command::Gen(a) => gen(a).map(|_| 0),
        Command::Run(a) => run(a),
        Command::Inspect(a) => inspect(a).map(|_| 0),
        Command::Eval(a) => eval(a).map(|_| 0),
        Command::Export(a) => export(a).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
