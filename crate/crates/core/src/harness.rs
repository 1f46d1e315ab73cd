//! Experiment configuration, presets and CSV metrics output.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{compute_alignment, dbm_to_watts, ChannelConfig};
use crate::engine::{run_experiment, Experiment, RoundMetrics, Scheme};
use crate::error::{Error, Result};
use crate::learn::{load_csv, partition_data, synthetic_dataset, PartitionMode, SyntheticSpec, Task, TaskKind};
use crate::privacy::{self, PrivacyParams};

/// Per-round budget used when neither `epsilon` nor `sigma` is given.
pub const DEFAULT_EPSILON: f64 = 0.5;

pub const CSV_HEADER: &str =
    "round,global_loss,global_grad_norm_sq,consensus_error,epsilon_round,epsilon_naive_total,theory_bound";

pub const PRESETS: [&str; 5] = [
    "power-sweep",
    "worker-sweep",
    "epsilon-sweep",
    "scheme-compare",
    "topology-compare",
];

/// A value shared by every worker or listed per worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerWorker {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerWorker {
    pub fn resolve(&self, field: &str, n: usize) -> Result<Vec<f64>> {
        match self {
            PerWorker::Scalar(v) => Ok(vec![*v; n]),
            PerWorker::List(v) if v.len() == n => Ok(v.clone()),
            PerWorker::List(v) => Err(Error::config(
                field,
                format!("expected one value or {n} values, got {}", v.len()),
            )),
        }
    }
}

impl std::str::FromStr for PerWorker {
    type Err = String;

    /// `"1.5"` or a comma-separated list `"1,2,3"`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let values = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        match values.as_slice() {
            [v] => Ok(PerWorker::Scalar(*v)),
            _ => Ok(PerWorker::List(values)),
        }
    }
}

/// User-facing run description. JSON keys match the command-line flags with
/// dashes replaced by underscores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub workers: usize,
    pub rounds: usize,
    pub gamma: f64,
    pub eta: f64,
    pub power_dbm: PerWorker,
    pub gains: PerWorker,
    pub channel_noise_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub delta: f64,
    pub g_max: f64,
    pub beta: PerWorker,
    pub task: TaskKind,
    pub dimension: usize,
    pub samples_per_worker: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub data_spread: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub partition: PartitionMode,
    pub seed: u64,
    pub init_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub server_outage_round: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Dwfl,
            workers: 10,
            rounds: 500,
            gamma: 0.05,
            eta: 0.5,
            power_dbm: PerWorker::Scalar(60.0),
            gains: PerWorker::Scalar(1.0),
            channel_noise_std: 1.0,
            epsilon: None,
            sigma: None,
            delta: 1e-5,
            g_max: 1.0,
            beta: PerWorker::Scalar(0.5),
            task: TaskKind::Quadratic,
            dimension: 10,
            samples_per_worker: 50,
            dataset: None,
            data_spread: 1.0,
            lambda: 0.0,
            batch_size: 1,
            partition: PartitionMode::Iid,
            seed: 0,
            init_scale: 0.0,
            server_outage_round: None,
            out: None,
        }
    }
}

/// Optional replacements for config fields, as given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scheme: Option<Scheme>,
    pub workers: Option<usize>,
    pub rounds: Option<usize>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub power_dbm: Option<PerWorker>,
    pub gains: Option<PerWorker>,
    pub channel_noise_std: Option<f64>,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub g_max: Option<f64>,
    pub beta: Option<PerWorker>,
    pub task: Option<TaskKind>,
    pub dimension: Option<usize>,
    pub samples_per_worker: Option<usize>,
    pub dataset: Option<PathBuf>,
    pub data_spread: Option<f64>,
    pub lambda: Option<f64>,
    pub batch_size: Option<usize>,
    pub partition: Option<PartitionMode>,
    pub seed: Option<u64>,
    pub init_scale: Option<f64>,
    pub server_outage_round: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Layers `overrides` on top of `self`. Giving one of epsilon/sigma drops
    /// the other from the lower layer.
    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &o.$field {
                    self.$field = v.clone();
                })*
            };
        }
        take!(
            scheme, workers, rounds, gamma, eta, power_dbm, gains, channel_noise_std, delta, g_max, beta, task,
            dimension, samples_per_worker, data_spread, lambda, batch_size, partition, seed, init_scale
        );
        if o.dataset.is_some() {
            self.dataset = o.dataset.clone();
        }
        if o.server_outage_round.is_some() {
            self.server_outage_round = o.server_outage_round;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        if o.epsilon.is_some() || o.sigma.is_some() {
            self.epsilon = o.epsilon;
            self.sigma = o.sigma;
        }
        self
    }

    /// Checks the field-level invariants.
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {v}")))
            }
        };
        if self.workers < 2 {
            return Err(Error::config("workers", format!("need at least 2, got {}", self.workers)));
        }
        positive("gamma", self.gamma)?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::config("eta", format!("must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        positive("g_max", self.g_max)?;
        if !(self.channel_noise_std >= 0.0 && self.channel_noise_std.is_finite()) {
            return Err(Error::config(
                "channel_noise_std",
                format!("must be finite and >= 0, got {}", self.channel_noise_std),
            ));
        }
        match (self.epsilon, self.sigma) {
            (Some(_), Some(_)) => return Err(Error::config("epsilon", "specify one of epsilon/sigma")),
            (Some(e), None) => positive("epsilon", e)?,
            (None, Some(s)) if !(s >= 0.0 && s.is_finite()) => {
                return Err(Error::config("sigma", format!("must be finite and >= 0, got {s}")))
            }
            _ => {}
        }
        if self.dimension == 0 && self.dataset.is_none() {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        if self.samples_per_worker == 0 && self.dataset.is_none() {
            return Err(Error::config("samples_per_worker", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.data_spread >= 0.0 && self.data_spread.is_finite()) {
            return Err(Error::config(
                "data_spread",
                format!("must be finite and >= 0, got {}", self.data_spread),
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config(
                "init_scale",
                format!("must be finite and >= 0, got {}", self.init_scale),
            ));
        }
        Ok(())
    }

    /// The per-worker transmit powers in watts.
    pub fn power_watts(&self) -> Result<Vec<f64>> {
        let dbm = self.power_dbm.resolve("power_dbm", self.workers)?;
        if let Some(v) = dbm.iter().find(|v| !v.is_finite()) {
            return Err(Error::config("power_dbm", format!("must be finite, got {v}")));
        }
        Ok(dbm.into_iter().map(dbm_to_watts).collect())
    }

    /// Validates and resolves every derived quantity: powers in watts, the
    /// power alignment, the dataset and its partition, and σ from ε when σ
    /// is not given.
    pub fn resolve(&self) -> Result<Experiment> {
        self.validate()?;
        let n = self.workers;
        let gains = self.gains.resolve("gains", n)?;
        if let Some(g) = gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::config("gains", format!("must be positive and finite, got {g}")));
        }
        let beta = self.beta.resolve("beta", n)?;
        if let Some(b) = beta.iter().find(|b| !(**b >= 0.0 && **b < 1.0)) {
            return Err(Error::config("beta", format!("must lie in [0, 1), got {b}")));
        }
        let channel = ChannelConfig::new(gains, vec![0.0; n], self.power_watts()?, self.channel_noise_std)?;
        let alloc = compute_alignment(&channel, &beta)?;

        let dataset = match &self.dataset {
            Some(path) => load_csv(path)?,
            None => synthetic_dataset(
                &SyntheticSpec {
                    kind: self.task,
                    dimension: self.dimension,
                    samples: n * self.samples_per_worker,
                    spread: self.data_spread,
                },
                self.seed,
            ),
        };
        let shards = partition_data(&dataset, n, self.partition, self.seed)?;
        let task = Task::new(self.task, shards, self.lambda, self.batch_size)?;

        let (epsilon_target, sigma) = match self.sigma {
            Some(s) => (None, s),
            None => {
                let eps = self.epsilon.unwrap_or(DEFAULT_EPSILON);
                let calibrate = match self.scheme {
                    Scheme::Dwfl => privacy::calibrate_sigma_dwfl,
                    Scheme::Orthogonal => privacy::calibrate_sigma_orthogonal,
                    Scheme::Centralized => privacy::calibrate_sigma_centralized,
                };
                let s = calibrate(eps, &channel, &alloc, self.gamma, self.g_max, self.delta)
                    .map_err(|e| Error::config("epsilon", e.to_string()))?;
                (Some(eps), s)
            }
        };
        let privacy = PrivacyParams::new(epsilon_target, self.delta, sigma, self.g_max)?;

        Ok(Experiment {
            scheme: self.scheme,
            channel,
            alloc,
            privacy,
            gamma: self.gamma,
            eta: self.eta,
            rounds: self.rounds,
            task,
            seed: self.seed,
            init_scale: self.init_scale,
            server_outage_round: self.server_outage_round,
        })
    }
}

/// Parses a JSON config document and validates it.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text)?;
    config.validate()?;
    Ok(config)
}

/// Reads a config file, applies `overrides` and validates the result.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let base = match path {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    let config = base.with_overrides(overrides);
    config.validate()?;
    Ok(config)
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the metrics CSV to any writer.
pub fn write_metrics<W: Write>(metrics: &[RoundMetrics], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER.split(','))?;
    for m in metrics {
        w.write_record([
            m.round.to_string(),
            fmt_float(m.global_loss),
            fmt_float(m.global_grad_norm_sq),
            fmt_float(m.consensus_error),
            fmt_float(m.epsilon_round),
            fmt_float(m.epsilon_naive_total),
            fmt_float(m.theory_bound.unwrap_or(f64::NAN)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the metrics CSV to `path`.
pub fn emit_metrics(metrics: &[RoundMetrics], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_metrics(metrics, std::io::BufWriter::new(file))
}

/// A named member of a preset batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub name: String,
    pub config: ExperimentConfig,
}

/// Expands a preset around `base`. Only the swept field differs between items.
pub fn preset(name: &str, base: &ExperimentConfig) -> Result<Vec<BatchItem>> {
    let item = |name: String, config: ExperimentConfig| BatchItem { name, config };
    let items = match name {
        "power-sweep" => [20.0, 40.0, 60.0, 80.0]
            .into_iter()
            .map(|p| {
                let c = ExperimentConfig {
                    power_dbm: PerWorker::Scalar(p),
                    ..base.clone()
                };
                item(format!("power-{p}dbm"), c)
            })
            .collect(),
        "worker-sweep" => [15, 20, 25, 30]
            .into_iter()
            .map(|n| {
                let c = ExperimentConfig {
                    workers: n,
                    ..base.clone()
                };
                item(format!("workers-{n}"), c)
            })
            .collect(),
        "epsilon-sweep" => [0.1, 0.25, 0.5, 1.0]
            .into_iter()
            .map(|e| {
                let c = ExperimentConfig {
                    epsilon: Some(e),
                    sigma: None,
                    ..base.clone()
                };
                item(format!("epsilon-{e}"), c)
            })
            .collect(),
        "scheme-compare" | "topology-compare" => {
            let other = if name == "scheme-compare" {
                Scheme::Orthogonal
            } else {
                Scheme::Centralized
            };
            [Scheme::Dwfl, other]
                .into_iter()
                .map(|s| {
                    let c = ExperimentConfig {
                        scheme: s,
                        ..base.clone()
                    };
                    item(format!("scheme-{s}"), c)
                })
                .collect()
        }
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (expected one of {})", PRESETS.join(", ")),
            ))
        }
    };
    Ok(items)
}

/// Resolves every item first, then runs the batch in parallel. Resolution
/// errors are reported before any run starts.
pub fn run_batch(items: &[BatchItem]) -> Result<Vec<Vec<RoundMetrics>>> {
    let experiments = items
        .iter()
        .map(|i| i.config.resolve())
        .collect::<Result<Vec<_>>>()?;
    experiments.par_iter().map(run_experiment).collect()
}
