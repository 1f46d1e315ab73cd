//! Learning tasks: per-worker datasets, stochastic gradient oracles and the
//! global objective `f(x) = (1/N) Σ_i f_i(x)`.
//!
//! Two losses are provided. The quadratic loss `½‖x − b‖²` has 1-Lipschitz
//! gradients and closed-form variance constants, which makes the convergence
//! bound checkable. The L2-regularized logistic loss is the realistic convex
//! workload.

use std::ops::{Deref, DerefMut};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Quadratic,
    Logistic,
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "quadratic" => Ok(TaskKind::Quadratic),
            "logistic" => Ok(TaskKind::Logistic),
            other => Err(format!("unknown task `{other}` (expected quadratic or logistic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    /// Shuffled equal split.
    Iid,
    /// Label-sorted contiguous split.
    Shards,
}

impl std::str::FromStr for PartitionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "iid" => Ok(PartitionMode::Iid),
            "shards" => Ok(PartitionMode::Shards),
            other => Err(format!("unknown partition `{other}` (expected iid or shards)")),
        }
    }
}

/// One data point. For the quadratic task `features` is the target `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
}

/// A worker's model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams(Vec<f64>);

impl ModelParams {
    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                name: "model parameter",
                value: v,
            });
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ModelParams {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ModelParams {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign_label(label: f64) -> f64 {
    if label > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Constants of the quadratic task entering the convergence bound.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstants {
    pub lipschitz: f64,
    /// Worst per-worker stochastic-gradient variance, divided by the batch size.
    pub sigma_f_sq: f64,
    /// Mean squared deviation of local gradients from the global one.
    pub zeta_sq: f64,
    pub optimum: Vec<f64>,
    pub optimal_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Task {
    kind: TaskKind,
    dimension: usize,
    shards: Vec<Vec<Sample>>,
    lambda: f64,
    batch_size: usize,
}

impl Task {
    pub fn new(kind: TaskKind, shards: Vec<Vec<Sample>>, lambda: f64, batch_size: usize) -> Result<Self> {
        let dimension = shards
            .iter()
            .flatten()
            .next()
            .map(|s| s.features.len())
            .ok_or(Error::EmptyDataset(0))?;
        if dimension == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        for (i, shard) in shards.iter().enumerate() {
            if shard.is_empty() {
                return Err(Error::EmptyDataset(i));
            }
            if let Some(s) = shard.iter().find(|s| s.features.len() != dimension) {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: s.features.len(),
                });
            }
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda", format!("must be finite and >= 0, got {lambda}")));
        }
        if batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(Self {
            kind,
            dimension,
            shards,
            lambda,
            batch_size,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_workers(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, worker: usize) -> &[Sample] {
        &self.shards[worker]
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn check_worker(&self, worker: usize) -> Result<&[Sample]> {
        let shard = self.shards.get(worker).ok_or(Error::WorkerIndex {
            index: worker,
            n: self.shards.len(),
        })?;
        if shard.is_empty() {
            return Err(Error::EmptyDataset(worker));
        }
        Ok(shard)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `F(x; ξ)` for one sample.
    pub fn sample_loss(&self, sample: &Sample, x: &[f64]) -> f64 {
        match self.kind {
            TaskKind::Quadratic => {
                0.5 * x.iter().zip(&sample.features).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            }
            TaskKind::Logistic => {
                let y = sign_label(sample.label);
                softplus(-y * dot(x, &sample.features)) + 0.5 * self.lambda * dot(x, x)
            }
        }
    }

    /// Adds `∇F(x; ξ) · weight` into `out`.
    fn accumulate_grad(&self, sample: &Sample, x: &[f64], weight: f64, out: &mut [f64]) {
        match self.kind {
            TaskKind::Quadratic => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(&sample.features) {
                    *o += weight * (a - b);
                }
            }
            TaskKind::Logistic => {
                let y = sign_label(sample.label);
                let coef = -y * sigmoid(-y * dot(x, &sample.features));
                for ((o, a), z) in out.iter_mut().zip(x).zip(&sample.features) {
                    *o += weight * (coef * z + self.lambda * a);
                }
            }
        }
    }

    /// Stochastic gradient of worker `worker` at `x` over a uniformly drawn
    /// mini-batch (with replacement).
    pub fn sample_and_grad<R: Rng + ?Sized>(&self, worker: usize, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let shard = self.check_worker(worker)?;
        self.check_dim(x)?;
        let mut g = vec![0.0; self.dimension];
        let w = 1.0 / self.batch_size as f64;
        for _ in 0..self.batch_size {
            let sample = &shard[rng.random_range(0..shard.len())];
            self.accumulate_grad(sample, x, w, &mut g);
        }
        Ok(g)
    }

    /// Full-batch `∇f_i(x)`.
    pub fn local_grad(&self, worker: usize, x: &[f64]) -> Result<Vec<f64>> {
        let shard = self.check_worker(worker)?;
        self.check_dim(x)?;
        let mut g = vec![0.0; self.dimension];
        let w = 1.0 / shard.len() as f64;
        for s in shard {
            self.accumulate_grad(s, x, w, &mut g);
        }
        Ok(g)
    }

    /// Full-batch `f_i(x)`.
    pub fn local_loss(&self, worker: usize, x: &[f64]) -> Result<f64> {
        let shard = self.check_worker(worker)?;
        self.check_dim(x)?;
        Ok(shard.iter().map(|s| self.sample_loss(s, x)).sum::<f64>() / shard.len() as f64)
    }

    pub fn global_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_workers() as f64;
        let mut g = vec![0.0; self.dimension];
        for i in 0..self.n_workers() {
            for (acc, v) in g.iter_mut().zip(self.local_grad(i, x)?) {
                *acc += v / n;
            }
        }
        Ok(g)
    }

    pub fn global_loss(&self, x: &[f64]) -> Result<f64> {
        let n = self.n_workers() as f64;
        (0..self.n_workers()).try_fold(0.0, |acc, i| Ok(acc + self.local_loss(i, x)? / n))
    }

    /// Exact smoothness and variance constants, for the quadratic task only.
    pub fn quadratic_constants(&self) -> Option<QuadraticConstants> {
        if self.kind != TaskKind::Quadratic {
            return None;
        }
        let d = self.dimension;
        let means: Vec<Vec<f64>> = self
            .shards
            .iter()
            .map(|shard| {
                let mut m = vec![0.0; d];
                for s in shard {
                    for (acc, b) in m.iter_mut().zip(&s.features) {
                        *acc += b / shard.len() as f64;
                    }
                }
                m
            })
            .collect();
        let n = self.n_workers() as f64;
        let mut optimum = vec![0.0; d];
        for m in &means {
            for (acc, v) in optimum.iter_mut().zip(m) {
                *acc += v / n;
            }
        }
        let sq_dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let sigma_f_sq = self
            .shards
            .iter()
            .zip(&means)
            .map(|(shard, m)| shard.iter().map(|s| sq_dist(&s.features, m)).sum::<f64>() / shard.len() as f64)
            .fold(0.0, f64::max)
            / self.batch_size as f64;
        let zeta_sq = means.iter().map(|m| sq_dist(m, &optimum)).sum::<f64>() / n;
        let optimal_loss = self.global_loss(&optimum).ok()?;
        Some(QuadraticConstants {
            lipschitz: 1.0,
            sigma_f_sq,
            zeta_sq,
            optimum,
            optimal_loss,
        })
    }
}

/// Splits `dataset` across `n` workers. Every sample lands on exactly one
/// worker and shard sizes differ by at most one.
pub fn partition_data(dataset: &[Sample], n: usize, mode: PartitionMode, seed: u64) -> Result<Vec<Vec<Sample>>> {
    if n == 0 || n > dataset.len() {
        return Err(Error::NotEnoughSamples {
            samples: dataset.len(),
            workers: n,
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    match mode {
        PartitionMode::Iid => order.shuffle(&mut rng_for(seed, Stream::Partition)),
        PartitionMode::Shards => {
            order.sort_by(|&a, &b| dataset[a].label.total_cmp(&dataset[b].label));
        }
    }
    let base = dataset.len() / n;
    let extra = dataset.len() % n;
    let mut shards = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let len = base + usize::from(i < extra);
        shards.push(order[start..start + len].iter().map(|&k| dataset[k].clone()).collect());
        start += len;
    }
    Ok(shards)
}

/// Generator settings for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: TaskKind,
    pub dimension: usize,
    pub samples: usize,
    /// Quadratic: per-coordinate std of targets around their cluster centre.
    /// Logistic: std of the features.
    pub spread: f64,
}

/// Two-class synthetic data.
///
/// Quadratic targets are drawn around one of two centres `o ± e/√d` (label
/// 0 or 1, alternating) where `o` is a fixed offset, so a label-sharded
/// partition yields heterogeneous workers. Logistic samples have Gaussian
/// features and labels drawn from a logistic model with a random true weight.
pub fn synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Vec<Sample> {
    let mut rng = rng_for(seed, Stream::Data);
    let d = spec.dimension;
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    match spec.kind {
        TaskKind::Quadratic => {
            let unit = 1.0 / (d as f64).sqrt();
            (0..spec.samples)
                .map(|k| {
                    let label = (k % 2) as f64;
                    let sign = 2.0 * label - 1.0;
                    let features = (0..d)
                        .map(|_| 0.5 + sign * unit + spec.spread * normal(&mut rng))
                        .collect();
                    Sample { features, label }
                })
                .collect()
        }
        TaskKind::Logistic => {
            let truth: Vec<f64> = (0..d).map(|_| 2.0 * normal(&mut rng) / (d as f64).sqrt()).collect();
            (0..spec.samples)
                .map(|_| {
                    let features: Vec<f64> = (0..d).map(|_| spec.spread * normal(&mut rng)).collect();
                    let p = sigmoid(dot(&truth, &features));
                    let label = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                    Sample { features, label }
                })
                .collect()
        }
    }
}

/// Reads a headed CSV whose rows are `feature_1, …, feature_d, label`.
pub fn load_csv(path: &Path) -> Result<Vec<Sample>> {
    let bad = |reason: String| Error::Dataset {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let columns = reader.headers()?.len();
    if columns < 2 {
        return Err(bad(format!("need at least one feature column and a label, header has {columns}")));
    }
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", row + 1)))?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(bad(format!("row {}: non-finite value {v}", row + 1)));
        }
        let (label, features) = values.split_last().expect("csv enforces column count");
        samples.push(Sample {
            features: features.to_vec(),
            label: *label,
        });
    }
    if samples.is_empty() {
        return Err(bad("no samples".into()));
    }
    Ok(samples)
}
