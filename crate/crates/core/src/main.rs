use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rgmjmcmc::data::{load_csv, Family};
use rgmjmcmc::enumerate::enumerate_posterior;
use rgmjmcmc::experiments::{compute_metrics, ExperimentKind, GroundTruth, RunMetrics};
use rgmjmcmc::runner::{
    read_inclusions, run, run_experiment, write_experiment, EstimatorSelection, ExperimentConfig,
    RunConfig,
};
use rgmjmcmc::{Execution, KernelKind, Target};

#[derive(Parser)]
#[command(name = "rgmjmcmc", version, about = "Bayesian feature generation and model averaging")]
struct Cli {
    /// Run lanes on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset with T independent lanes.
    Run(RunArgs),
    /// Exact posterior over all models of bounded size built from the base covariates.
    Enumerate(EnumerateArgs),
    /// Replicated synthetic study with metrics per lane count.
    Experiment(ExperimentArgs),
    /// Recompute detection metrics from saved inclusion files.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    response: Option<String>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Fraction of iterations discarded before frequency counting.
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    pop_size: Option<usize>,
    #[arg(long)]
    max_model_size: Option<usize>,
    #[arg(long)]
    kernel: Option<KernelKind>,
    #[arg(long)]
    estimator: Option<EstimatorSelection>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value = "gaussian")]
    family: Family,
    #[arg(long, default_value_t = 2)]
    max_model_size: usize,
    #[arg(long)]
    gamma: Option<f64>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    kind: ExperimentKind,
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated lane counts.
    #[arg(long, value_delimiter = ',')]
    threads: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    pop_size: Option<usize>,
    #[arg(long)]
    max_model_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "experiment_out")]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Inclusion files, one per replicate.
    #[arg(required = true)]
    inclusions: Vec<PathBuf>,
    /// Ground truth of a built-in study.
    #[arg(long, conflicts_with = "truth")]
    experiment: Option<ExperimentKind>,
    /// Ground truth as JSON (as written by `experiment`).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "renorm")]
    estimator: EstimatorSelection,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 1)]
    lanes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_run(args: RunArgs, exec: Execution) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.data {
        cfg.data.path = Some(v);
    }
    if let Some(v) = args.response {
        cfg.data.response = v;
    }
    if let Some(v) = args.family {
        cfg.data.family = v;
    }
    if let Some(v) = args.threads {
        cfg.run.threads = v;
    }
    if let Some(v) = args.iterations {
        cfg.run.iterations = v;
    }
    if let Some(v) = args.burn_in {
        cfg.run.burn_in = v;
    }
    if let Some(v) = args.pop_size {
        cfg.sampler.pop_size = v;
    }
    if let Some(v) = args.max_model_size {
        cfg.sampler.max_model_size = v;
    }
    if let Some(v) = args.kernel {
        cfg.sampler.kernel = v;
    }
    if let Some(v) = args.estimator {
        cfg.run.estimator = v;
    }
    if let Some(v) = args.seed {
        cfg.run.seed = v;
    }
    if let Some(v) = args.out {
        cfg.run.out = v;
    }
    let out = run(&cfg, exec)?;
    for (lane, msg) in &out.failures {
        eprintln!("lane {lane} failed: {msg}");
    }
    eprintln!(
        "{} lanes, {} models in archive, {:.2}s, output in {}",
        out.lanes.len(),
        out.archive.len(),
        out.seconds,
        cfg.run.out.display()
    );
    Ok(!out.degraded())
}

fn cmd_enumerate(args: EnumerateArgs, exec: Execution) -> Result<bool> {
    let data = Arc::new(load_csv(&args.data, &args.response, args.family)?);
    let features = data.base_covariates();
    let target = Target::new(data, args.gamma);
    let post = enumerate_posterior(&features, args.max_model_size, &target, exec)?;
    match args.out {
        Some(p) => post.write_csv(std::fs::File::create(&p).with_context(|| p.display().to_string())?)?,
        None => post.write_csv(std::io::stdout().lock())?,
    }
    Ok(true)
}

fn cmd_experiment(args: ExperimentArgs, exec: Execution) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            let cfg: ExperimentConfig = toml::from_str(&text)?;
            if cfg.kind != args.kind {
                bail!("config is for experiment {}, not {}", cfg.kind, args.kind);
            }
            cfg
        }
        None => ExperimentConfig::for_kind(args.kind),
    };
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = args.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = args.pop_size {
        cfg.sampler.pop_size = v;
    }
    if let Some(v) = args.max_model_size {
        cfg.sampler.max_model_size = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let out = run_experiment(&cfg, exec, |t, r, run| {
        eprintln!(
            "T={t} replicate {r}: {} models, {:.2}s",
            run.archive.len(),
            run.seconds
        );
    })?;
    write_experiment(&args.out, &cfg, &out)?;
    RunMetrics::write_csv(&out.metrics, std::io::stdout().lock())?;
    Ok(!out.degraded)
}

fn cmd_metrics(args: MetricsArgs) -> Result<bool> {
    let mut truth: GroundTruth = match (&args.experiment, &args.truth) {
        (Some(kind), None) => ExperimentConfig::for_kind(*kind).generate(0).1,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            serde_json::from_str(&text)?
        }
        _ => bail!("give exactly one of --experiment or --truth"),
    };
    if truth.entries.is_empty() {
        bail!("ground truth has no entries");
    }
    if let Some(t) = args.threshold {
        if !(t > 0.0 && t < 1.0) {
            bail!("threshold must lie in (0, 1)");
        }
        truth.threshold = t;
    }
    let reps = args
        .inclusions
        .iter()
        .map(|p| read_inclusions(p, args.estimator))
        .collect::<Result<Vec<_>, _>>()?;
    let m = compute_metrics(&reps, &truth, args.lanes);
    match args.out {
        Some(p) => RunMetrics::write_csv(&[m], std::fs::File::create(&p).with_context(|| p.display().to_string())?)?,
        None => RunMetrics::write_csv(&[m], std::io::stdout().lock())?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, exec),
        Command::Enumerate(a) => cmd_enumerate(a, exec),
        Command::Experiment(a) => cmd_experiment(a, exec),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("degraded run: some lanes failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
