use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rkdl_core::datasets::{self, DatasetSpec};
use rkdl_core::experiment::{emit_outputs, run_experiment, ExperimentConfig, Method, Summary};
use rkdl_core::model::ModelContainer;
use rkdl_core::{aksvd_train, kdl_train, morkdl_train, orkdl_train, rkdl_train, SparseCode, TrainOutput};

#[derive(Parser)]
#[command(name = "rkdl", version, about = "Reduced kernel dictionary learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every selected method for several seeded rounds and write
    /// errors.csv, curves.csv and summary.json.
    Bench(BenchArgs),
    /// Train one method once and save the model.
    Train(TrainArgs),
    /// Sparse-code a dataset with a saved model.
    Code(CodeArgs),
}

#[derive(Args)]
struct Overrides {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Dataset description (JSON) replacing the one in the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Base seed replacing the one in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Overrides,
    /// Restrict to these methods (repeatable).
    #[arg(long = "method")]
    methods: Vec<Method>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Output directory; defaults to the config's output_dir or ./results.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    method: Method,
    /// Where to write the model container.
    #[arg(long)]
    model: PathBuf,
    /// Also write the training code as CSV.
    #[arg(long)]
    code: Option<PathBuf>,
}

#[derive(Args)]
struct CodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset description (JSON).
    #[arg(long)]
    dataset: PathBuf,
    /// Sparsity; defaults to the one the model was trained with.
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        report(&e);
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::Bench(args) => bench(args),
        Command::Train(args) => train(args).map(|_| ExitCode::SUCCESS),
        Command::Code(args) => code(args).map(|_| ExitCode::SUCCESS),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            report(&e);
            ExitCode::from(2)
        }
    }
}

/// Prints the error chain, skipping causes already quoted by the message
/// above them.
fn report(e: &anyhow::Error) {
    let mut text = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    eprintln!("error: {text}");
}

/// `RKDL_THREADS` sets the worker count of the global pool.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("RKDL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .with_context(|| format!("RKDL_THREADS must be a positive integer, got {value:?}"))?;
    if n == 0 {
        bail!("RKDL_THREADS must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn load_config(o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_json_file(&o.config)?;
    if let Some(path) = &o.dataset {
        cfg.dataset = read_dataset(path)?;
    }
    if let Some(seed) = o.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn read_dataset(path: &Path) -> Result<DatasetSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing dataset description {}", path.display()))
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.common)?;
    if !args.methods.is_empty() {
        cfg.methods = args.methods;
    }
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));

    let result = run_experiment(&cfg)?;
    emit_outputs(&result, &out)?;

    let summary = Summary::from_result(&result);
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{} ({} signals of length {})", summary.provenance, summary.signal_count, summary.signal_dim)?;
    writeln!(
        stdout,
        "{:<10} {:>6} {:>14} {:>12} {:>10} {:>10}",
        "method", "rounds", "final error", "std", "train s", "pretrain s"
    )?;
    for m in &summary.methods {
        writeln!(
            stdout,
            "{:<10} {:>6} {:>14.6e} {:>12.3e} {:>10.3} {:>10.3}{}",
            m.method.name(),
            m.rounds,
            m.mean_final_error,
            m.std_final_error,
            m.mean_seconds,
            m.mean_pretrain_seconds,
            m.aborted.as_deref().map(|a| format!("  ABORTED {a}")).unwrap_or_default()
        )?;
    }
    writeln!(stdout, "results written to {}", out.display())?;

    Ok(if result.any_aborted() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    cfg.validate()?;
    let signals = datasets::load(&cfg.dataset)?;
    let y = signals.view();
    let kcfg = cfg.kdl_for(args.method, 0);
    let out: TrainOutput = match args.method {
        Method::Kdl => kdl_train(y, &cfg.kernel, &kcfg)?,
        reduced => {
            let d = aksvd_train(y, &cfg.dl_for(0))?.dictionary;
            match reduced {
                Method::Rkdl => rkdl_train(y, &d, &cfg.kernel, &kcfg)?,
                Method::Orkdl => orkdl_train(y, &d, &cfg.kernel, &kcfg)?,
                _ => morkdl_train(y, &d, &cfg.kernel, &kcfg)?.output,
            }
        }
    };
    println!(
        "{}: final error {:.6e} after {} iterations",
        args.method,
        out.trace.errors.last().copied().unwrap_or(f64::NAN),
        kcfg.iters
    );
    ModelContainer::new(args.method, &out.model, kcfg, out.trace).save(&args.model)?;
    if let Some(path) = args.code {
        write_code(&path, &out.code)?;
    }
    Ok(())
}

fn code(args: CodeArgs) -> Result<()> {
    let container = ModelContainer::load(&args.model)?;
    let model = container.kernel_dictionary()?;
    let signals = datasets::load(&read_dataset(&args.dataset)?)?;
    let s = args.sparsity.unwrap_or(container.config.sparsity);
    let (z, ridged) = model.encode(signals.view(), s)?;
    if ridged > 0 {
        log::warn!("{ridged} support systems needed a ridge");
    }
    let err = rkdl_core::error_metric(signals.view(), &model, &z)?;
    println!("coded {} signals, error {:.6e}", signals.len(), err);
    write_code(&args.out, &z)
}

/// Sparse code as `signal,atom,value` rows.
fn write_code(path: &Path, z: &SparseCode) -> Result<()> {
    let mut text = String::from("signal,atom,value\n");
    for (s, col) in z.columns().iter().enumerate() {
        for (&i, &v) in col.support.iter().zip(&col.values) {
            text.push_str(&format!("{s},{i},{v}\n"));
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
