use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use dwfl::engine::{run_experiment, Scheme};
use dwfl::harness::{emit_metrics, load_config, preset, run_batch, write_metrics, Overrides, PerWorker};
use dwfl::learn::{PartitionMode, TaskKind};

/// Simulate decentralized federated learning over a noisy shared wireless channel.
///
/// Writes one CSV row of metrics per round. Flags override values from `--config`.
#[derive(Debug, Parser)]
#[command(name = "dwfl", version)]
struct Cli {
    /// JSON config file; keys match these flags with `_` for `-`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// dwfl, orthogonal or centralized.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Gradient step size.
    #[arg(long)]
    gamma: Option<f64>,
    /// Averaging rate in (0, 1].
    #[arg(long)]
    eta: Option<f64>,
    /// Transmit power in dBm, one value or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    power_dbm: Option<PerWorker>,
    /// Channel gain magnitudes, one value or a comma-separated list.
    #[arg(long)]
    gains: Option<PerWorker>,
    #[arg(long)]
    channel_noise_std: Option<f64>,
    /// Per-round privacy budget; the mask std is calibrated from it.
    #[arg(long, conflicts_with = "sigma")]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Privacy mask std, used as given.
    #[arg(long)]
    sigma: Option<f64>,
    /// Gradient clipping bound.
    #[arg(long)]
    g_max: Option<f64>,
    /// Fraction of power spent on the privacy mask, one value or a list.
    #[arg(long)]
    beta: Option<PerWorker>,
    /// quadratic or logistic.
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    samples_per_worker: Option<usize>,
    /// CSV file with feature columns followed by a label column.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    data_spread: Option<f64>,
    /// L2 regularization of the logistic task.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// iid or shards.
    #[arg(long)]
    partition: Option<PartitionMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    init_scale: Option<f64>,
    /// Centralized scheme only: the server fails from this round on.
    #[arg(long)]
    server_outage_round: Option<usize>,
    /// Output CSV, or output directory with --preset. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// power-sweep, worker-sweep, epsilon-sweep, scheme-compare or topology-compare.
    #[arg(long)]
    preset: Option<String>,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            scheme: self.scheme,
            workers: self.workers,
            rounds: self.rounds,
            gamma: self.gamma,
            eta: self.eta,
            power_dbm: self.power_dbm.clone(),
            gains: self.gains.clone(),
            channel_noise_std: self.channel_noise_std,
            epsilon: self.epsilon,
            sigma: self.sigma,
            delta: self.delta,
            g_max: self.g_max,
            beta: self.beta.clone(),
            task: self.task,
            dimension: self.dimension,
            samples_per_worker: self.samples_per_worker,
            dataset: self.dataset.clone(),
            data_spread: self.data_spread,
            lambda: self.lambda,
            batch_size: self.batch_size,
            partition: self.partition,
            seed: self.seed,
            init_scale: self.init_scale,
            server_outage_round: self.server_outage_round,
            out: self.out.clone(),
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load_config(cli.config.as_deref(), &cli.overrides()).map_err(|e| Failure::Config(e.to_string()))?;

    if let Some(name) = &cli.preset {
        let dir = config
            .out
            .clone()
            .ok_or_else(|| Failure::Config("invalid config field `out`: a preset needs an output directory".into()))?;
        let items = preset(name, &config).map_err(|e| Failure::Config(e.to_string()))?;
        for item in &items {
            item.config.resolve().map_err(|e| Failure::Config(format!("{}: {e}", item.name)))?;
        }
        let results = run_batch(&items).map_err(|e| Failure::Runtime(e.to_string()))?;
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
        for (item, metrics) in items.iter().zip(&results) {
            let path = dir.join(format!("{}.csv", item.name));
            emit(&path, metrics)?;
        }
        return Ok(());
    }

    let experiment = config.resolve().map_err(|e| Failure::Config(e.to_string()))?;
    let metrics = run_experiment(&experiment).map_err(|e| Failure::Runtime(e.to_string()))?;
    match &config.out {
        Some(path) => emit(path, &metrics),
        None => write_metrics(&metrics, std::io::stdout().lock()).map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn emit(path: &Path, metrics: &[dwfl::engine::RoundMetrics]) -> Result<(), Failure> {
    emit_metrics(metrics, path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
