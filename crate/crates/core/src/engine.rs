//! Round loop of decentralized wireless federated learning and its baselines.
//!
//! One round of the shared-channel scheme, for every worker `i`:
//!
//! 1. draw a mini-batch and clip its gradient to `g_max`;
//! 2. take a local step `x_i ← x_i − γ g_i`;
//! 3. draw a privacy mask `𝒢_i ~ N(0, σ² I)` and transmit
//!    `sqrt(α_i P_i) x_i + sqrt(β_i P_i) 𝒢_i`;
//! 4. receive the over-the-air sum `v_i` of every peer's transmission and mix
//!    `x_i ← x_i + (η / c) (v_i / (N−1) − c (x_i + Φ_i))`, where
//!    `Φ_i = |h_i| sqrt(β_i P_i) 𝒢_i / c` is the worker's own de-scaled mask.
//!
//! Because the mixing matrix is doubly stochastic, the network average only
//! moves by the averaged gradient step (plus a share of channel noise); the
//! masks cancel in the mean.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, AnalysisParams};
use crate::channel::{superpose, ChannelConfig, PowerAllocation, Receiver};
use crate::error::{Error, Result};
use crate::learn::{ModelParams, Task, TaskKind};
use crate::privacy::{self, clip_gradient, PrivacyParams};
use crate::streams::{rng_for, NoiseSource, SeededNoise, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Over-the-air aggregation on a shared channel.
    Dwfl,
    /// One dedicated link per ordered worker pair.
    Orthogonal,
    /// A parameter server aggregates and broadcasts.
    Centralized,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dwfl" => Ok(Scheme::Dwfl),
            "orthogonal" => Ok(Scheme::Orthogonal),
            "centralized" => Ok(Scheme::Centralized),
            other => Err(format!(
                "unknown scheme `{other}` (expected dwfl, orthogonal or centralized)"
            )),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Dwfl => "dwfl",
            Scheme::Orthogonal => "orthogonal",
            Scheme::Centralized => "centralized",
        })
    }
}

#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: usize,
    pub params: ModelParams,
    rng: ChaCha8Rng,
    /// This round's privacy mask 𝒢_i, already scaled by σ.
    pub last_noise: Vec<f64>,
}

impl WorkerState {
    pub fn new(id: usize, params: ModelParams, seed: u64) -> Self {
        let d = params.len();
        Self {
            id,
            params,
            rng: rng_for(seed, Stream::Sampling { worker: id }),
            last_noise: vec![0.0; d],
        }
    }
}

/// Workers starting at the origin, or at `N(0, init_scale²)` when `init_scale > 0`.
pub fn init_workers(n: usize, dimension: usize, seed: u64, init_scale: f64) -> Vec<WorkerState> {
    (0..n)
        .map(|i| {
            let mut params = ModelParams::zeros(dimension);
            if init_scale > 0.0 {
                let mut rng = rng_for(seed, Stream::Init { worker: i });
                for v in params.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = init_scale * z;
                }
            }
            WorkerState::new(i, params, seed)
        })
        .collect()
}

/// Uniform peer-averaging matrix `W = (𝟙𝟙ᵀ − I)/(N−1)` and its damped form
/// `Ψ = (1−η) I + η W`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSpec {
    eta: f64,
    w: DMatrix<f64>,
    psi: DMatrix<f64>,
}

impl MixingSpec {
    pub fn new(n: usize, eta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewWorkers(n));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidEta(eta));
        }
        let off = 1.0 / (n - 1) as f64;
        let w = DMatrix::from_fn(n, n, |r, c| if r == c { 0.0 } else { off });
        let psi = DMatrix::identity(n, n) * (1.0 - eta) + &w * eta;
        Ok(Self { eta, w, psi })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }
}

/// Global update in matrix form: `(X − γG) Ψ + Φ (Ψ − I)`, columns indexed by worker.
pub fn matrix_round_oracle(
    x: &DMatrix<f64>,
    g: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    gamma: f64,
    mixing: &MixingSpec,
) -> Result<DMatrix<f64>> {
    let n = mixing.n();
    for m in [x, g, phi] {
        if m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.ncols(),
            });
        }
        if m.nrows() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: m.nrows(),
            });
        }
    }
    let psi = mixing.psi();
    let identity = DMatrix::<f64>::identity(n, n);
    Ok((x - g * gamma) * psi + phi * (psi - identity))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    /// `f` at the post-round network average.
    pub global_loss: f64,
    /// `‖∇f(x̄)‖²` at the pre-round network average.
    pub global_grad_norm_sq: f64,
    /// `‖X (I − 𝟙𝟙ᵀ/N)‖_F²` after the round.
    pub consensus_error: f64,
    /// Worst per-round budget over all listeners; infinite without noise.
    pub epsilon_round: f64,
    /// `(round + 1) · epsilon_round`, a non-tight linear total.
    pub epsilon_naive_total: f64,
    /// Convergence bound on the running mean of `global_grad_norm_sq`, when available.
    pub theory_bound: Option<f64>,
}

/// Everything a round needs besides the worker states.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub channel: &'a ChannelConfig,
    pub alloc: &'a PowerAllocation,
    pub privacy: &'a PrivacyParams,
    pub gamma: f64,
    pub eta: f64,
    pub task: &'a Task,
}

impl RoundContext<'_> {
    fn validate(&self, states: &[WorkerState]) -> Result<()> {
        let n = self.channel.n_workers();
        if n < 2 {
            return Err(Error::TooFewWorkers(n));
        }
        if states.len() != n {
            return Err(Error::WorkerCountMismatch {
                name: "worker states",
                expected: n,
                found: states.len(),
            });
        }
        if self.task.n_workers() != n {
            return Err(Error::WorkerCountMismatch {
                name: "task shards",
                expected: n,
                found: self.task.n_workers(),
            });
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidEta(self.eta));
        }
        let d = self.task.dimension();
        if let Some(s) = states.iter().find(|s| s.params.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: s.params.len(),
            });
        }
        Ok(())
    }
}

/// Result of one round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub metrics: RoundMetrics,
    /// Clipped stochastic gradients, one per worker.
    pub gradients: Vec<Vec<f64>>,
}

/// A worker's contribution to one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub gradient: Vec<f64>,
    /// `x_i^(t)`, the parameters after the local step.
    pub local: Vec<f64>,
    /// Real-baseband transmit vector.
    pub transmit: Vec<f64>,
}

/// Clipped stochastic gradient and the local step it produces.
pub fn local_step(state: &mut WorkerState, task: &Task, gamma: f64, g_max: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let raw = task.sample_and_grad(state.id, &state.params, &mut state.rng)?;
    let gradient = clip_gradient(&raw, g_max);
    let local = state.params.iter().zip(&gradient).map(|(x, g)| x - gamma * g).collect();
    Ok((gradient, local))
}

/// `signal_amplitude · x + mask_amplitude · mask`.
pub fn transmit_vector(local: &[f64], mask: &[f64], signal_amplitude: f64, mask_amplitude: f64) -> Vec<f64> {
    local
        .iter()
        .zip(mask)
        .map(|(x, m)| signal_amplitude * x + mask_amplitude * m)
        .collect()
}

fn draw_scaled(std: f64, out: &mut [f64], draw: impl FnOnce(&mut [f64])) {
    if std > 0.0 {
        draw(out);
        out.iter_mut().for_each(|v| *v *= std);
    } else {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Gradient, local step, mask draw and transmit vector for one worker.
pub fn generate_signal(
    state: &mut WorkerState,
    ctx: &RoundContext<'_>,
    round: usize,
    noise: &mut dyn NoiseSource,
) -> Result<Signal> {
    let (gradient, local) = local_step(state, ctx.task, ctx.gamma, ctx.privacy.g_max)?;
    let d = local.len();
    state.last_noise.resize(d, 0.0);
    let id = state.id;
    draw_scaled(ctx.privacy.sigma, &mut state.last_noise, |out| noise.privacy(id, round, out));
    let transmit = transmit_vector(
        &local,
        &state.last_noise,
        ctx.alloc.signal_amplitude(ctx.channel, id),
        ctx.alloc.mask_amplitude(ctx.channel, id),
    );
    Ok(Signal {
        gradient,
        local,
        transmit,
    })
}

fn network_mean(columns: &[impl AsRef<[f64]>]) -> Vec<f64> {
    let n = columns.len() as f64;
    let d = columns.first().map_or(0, |c| c.as_ref().len());
    let mut mean = vec![0.0; d];
    for col in columns {
        for (m, v) in mean.iter_mut().zip(col.as_ref()) {
            *m += v / n;
        }
    }
    mean
}

/// Mean of the current worker parameters.
pub fn network_average(states: &[WorkerState]) -> Vec<f64> {
    let cols: Vec<&[f64]> = states.iter().map(|s| &s.params[..]).collect();
    network_mean(&cols)
}

fn infinite_on_zero_noise(eps: Result<f64>) -> Result<f64> {
    match eps {
        Err(Error::ZeroNoise) => Ok(f64::INFINITY),
        other => other,
    }
}

fn measure(
    states: &[WorkerState],
    task: &Task,
    pre_mean: &[f64],
    round: usize,
    epsilon_round: f64,
) -> Result<RoundMetrics> {
    let grad = task.global_grad(pre_mean)?;
    let post_mean = network_average(states);
    let cols: Vec<&[f64]> = states.iter().map(|s| &s.params[..]).collect();
    Ok(RoundMetrics {
        round,
        global_loss: task.global_loss(&post_mean)?,
        global_grad_norm_sq: grad.iter().map(|g| g * g).sum(),
        consensus_error: analysis::consensus_error(&cols),
        epsilon_round,
        epsilon_naive_total: privacy::naive_composition(epsilon_round, round + 1),
        theory_bound: None,
    })
}

/// One round of over-the-air decentralized learning.
pub fn dwfl_round(
    states: &mut [WorkerState],
    ctx: &RoundContext<'_>,
    round: usize,
    noise: &mut dyn NoiseSource,
) -> Result<RoundOutcome> {
    ctx.validate(states)?;
    let n = states.len();
    let d = ctx.task.dimension();
    let c = ctx.alloc.c();
    let pre_mean = network_average(states);

    let signals = states
        .iter_mut()
        .map(|s| generate_signal(s, ctx, round, noise))
        .collect::<Result<Vec<_>>>()?;
    let transmits: Vec<Vec<f64>> = signals.iter().map(|s| s.transmit.clone()).collect();

    let sigma_m = ctx.channel.channel_noise_std();
    let mut channel_noise = vec![0.0; d];
    for (i, (state, signal)) in states.iter_mut().zip(&signals).enumerate() {
        draw_scaled(sigma_m, &mut channel_noise, |out| noise.channel(i, round, out));
        let v = superpose(&transmits, Receiver::Worker(i), ctx.channel, &channel_noise)?.value;
        let own_mask = ctx.channel.gains()[i] * ctx.alloc.mask_amplitude(ctx.channel, i) / c;
        let updated: Vec<f64> = signal
            .local
            .iter()
            .zip(&v)
            .zip(&state.last_noise)
            .map(|((x, v), g)| {
                let phi = own_mask * g;
                x + ctx.eta / c * (v / (n - 1) as f64 - c * (x + phi))
            })
            .collect();
        state.params = ModelParams::new(updated)?;
    }

    let eps = infinite_on_zero_noise(privacy::epsilon_dwfl_max(ctx.channel, ctx.alloc, ctx.privacy, ctx.gamma))?;
    Ok(RoundOutcome {
        metrics: measure(states, ctx.task, &pre_mean, round, eps)?,
        gradients: signals.into_iter().map(|s| s.gradient).collect(),
    })
}

/// One round of the orthogonal baseline.
///
/// Every ordered pair `j → i` has its own link. Sender `j` spends its residual
/// power `(1 − β_j) P_j` on the parameter and `β_j P_j` on a fresh mask per
/// link. Receiver `i` de-scales each link, averages the `N − 1` estimates and
/// mixes with rate η.
pub fn orthogonal_round(
    states: &mut [WorkerState],
    ctx: &RoundContext<'_>,
    round: usize,
    noise: &mut dyn NoiseSource,
) -> Result<RoundOutcome> {
    ctx.validate(states)?;
    let n = states.len();
    let d = ctx.task.dimension();
    let pre_mean = network_average(states);

    let steps = states
        .iter_mut()
        .map(|s| local_step(s, ctx.task, ctx.gamma, ctx.privacy.g_max))
        .collect::<Result<Vec<_>>>()?;

    let sigma = ctx.privacy.sigma;
    let sigma_m = ctx.channel.channel_noise_std();
    let amplitudes: Vec<f64> = (0..n)
        .map(|j| privacy::orthogonal_amplitude(ctx.channel, ctx.alloc, j))
        .collect();
    let mut mask = vec![0.0; d];
    let mut link_noise = vec![0.0; d];
    for (i, state) in states.iter_mut().enumerate() {
        let mut estimate = vec![0.0; d];
        for (j, (_, local_j)) in steps.iter().enumerate() {
            if j == i {
                continue;
            }
            draw_scaled(sigma, &mut mask, |out| noise.link_privacy(j, i, round, out));
            draw_scaled(sigma_m, &mut link_noise, |out| noise.link_channel(j, i, round, out));
            let gain = ctx.channel.gains()[j];
            let mask_amp = gain * ctx.alloc.mask_amplitude(ctx.channel, j);
            let a = amplitudes[j];
            for k in 0..d {
                let received = a * local_j[k] + mask_amp * mask[k] + link_noise[k];
                estimate[k] += received / a / (n - 1) as f64;
            }
        }
        let local = &steps[i].1;
        let updated = local
            .iter()
            .zip(&estimate)
            .map(|(x, e)| x + ctx.eta * (e - x))
            .collect();
        state.params = ModelParams::new(updated)?;
        state.last_noise.iter_mut().for_each(|v| *v = 0.0);
    }

    let eps = infinite_on_zero_noise(privacy::epsilon_orthogonal_max(
        ctx.channel,
        ctx.alloc,
        ctx.privacy,
        ctx.gamma,
    ))?;
    Ok(RoundOutcome {
        metrics: measure(states, ctx.task, &pre_mean, round, eps)?,
        gradients: steps.into_iter().map(|(g, _)| g).collect(),
    })
}

/// One round with a parameter server: every worker transmits on one shared
/// channel use, the server de-scales the sum by `c N` and broadcasts it
/// noiselessly, and every worker adopts the broadcast value. The server's
/// channel noise uses receiver index `N`. Fails when the server is down.
pub fn centralized_round(
    states: &mut [WorkerState],
    ctx: &RoundContext<'_>,
    round: usize,
    noise: &mut dyn NoiseSource,
    server_available: bool,
) -> Result<RoundOutcome> {
    ctx.validate(states)?;
    if !server_available {
        return Err(Error::ServerOutage(round));
    }
    let n = states.len();
    let d = ctx.task.dimension();
    let pre_mean = network_average(states);

    let signals = states
        .iter_mut()
        .map(|s| generate_signal(s, ctx, round, noise))
        .collect::<Result<Vec<_>>>()?;
    let transmits: Vec<Vec<f64>> = signals.iter().map(|s| s.transmit.clone()).collect();

    let mut server_noise = vec![0.0; d];
    draw_scaled(ctx.channel.channel_noise_std(), &mut server_noise, |out| {
        noise.channel(n, round, out)
    });
    let v = superpose(&transmits, Receiver::Server, ctx.channel, &server_noise)?.value;
    let scale = ctx.alloc.c() * n as f64;
    let broadcast = ModelParams::new(v.iter().map(|x| x / scale).collect())?;
    for state in states.iter_mut() {
        state.params = broadcast.clone();
    }

    let eps = infinite_on_zero_noise(privacy::epsilon_centralized(
        ctx.channel,
        ctx.alloc,
        ctx.privacy,
        ctx.gamma,
    ))?;
    Ok(RoundOutcome {
        metrics: measure(states, ctx.task, &pre_mean, round, eps)?,
        gradients: signals.into_iter().map(|s| s.gradient).collect(),
    })
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scheme: Scheme,
    pub channel: ChannelConfig,
    pub alloc: PowerAllocation,
    pub privacy: PrivacyParams,
    pub gamma: f64,
    pub eta: f64,
    pub rounds: usize,
    pub task: Task,
    pub seed: u64,
    pub init_scale: f64,
    /// Round at which the parameter server goes down (centralized scheme only).
    pub server_outage_round: Option<usize>,
}

impl Experiment {
    pub fn context(&self) -> RoundContext<'_> {
        RoundContext {
            channel: &self.channel,
            alloc: &self.alloc,
            privacy: &self.privacy,
            gamma: self.gamma,
            eta: self.eta,
            task: &self.task,
        }
    }

    /// Analysis inputs for the bound, available for the shared-channel scheme
    /// on the quadratic task.
    pub fn analysis_params(&self, initial_mean: &[f64], rounds: usize) -> Option<AnalysisParams> {
        if self.scheme != Scheme::Dwfl || self.task.kind() != TaskKind::Quadratic {
            return None;
        }
        let k = self.task.quadratic_constants()?;
        let start = self.task.global_loss(initial_mean).ok()?;
        Some(AnalysisParams {
            lipschitz: k.lipschitz,
            sigma_f: k.sigma_f_sq.sqrt(),
            zeta: k.zeta_sq.sqrt(),
            c4: (start - k.optimal_loss).max(0.0),
            sigma_z_sq: analysis::sigma_z_sq(&self.channel, &self.alloc, self.privacy.sigma),
            dimension: self.task.dimension(),
            rounds,
            n_workers: self.channel.n_workers(),
        })
    }
}

/// Runs `rounds` rounds from the configured initialization and returns one
/// metrics row per round.
pub fn run_experiment(exp: &Experiment) -> Result<Vec<RoundMetrics>> {
    let mut noise = SeededNoise::new(exp.seed);
    run_with_noise(exp, &mut noise).map(|(m, _)| m)
}

/// As [`run_experiment`], with an explicit noise source; also returns the final worker states.
pub fn run_with_noise(exp: &Experiment, noise: &mut dyn NoiseSource) -> Result<(Vec<RoundMetrics>, Vec<WorkerState>)> {
    let n = exp.channel.n_workers();
    let mut states = init_workers(n, exp.task.dimension(), exp.seed, exp.init_scale);
    let ctx = exp.context();
    let initial_mean = network_average(&states);
    let mut metrics = Vec::with_capacity(exp.rounds);
    for t in 0..exp.rounds {
        let outcome = match exp.scheme {
            Scheme::Dwfl => dwfl_round(&mut states, &ctx, t, noise)?,
            Scheme::Orthogonal => orthogonal_round(&mut states, &ctx, t, noise)?,
            Scheme::Centralized => {
                let up = exp.server_outage_round.is_none_or(|r| t < r);
                centralized_round(&mut states, &ctx, t, noise, up)?
            }
        };
        let mut m = outcome.metrics;
        m.theory_bound = exp
            .analysis_params(&initial_mean, t + 1)
            .and_then(|p| analysis::convergence_bound(&p, exp.gamma).ok());
        metrics.push(m);
    }
    Ok((metrics, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::compute_alignment;
    use crate::learn::Sample;

    /// Replays fixed standard-normal vectors regardless of label.
    struct ConstNoise(f64);

    impl NoiseSource for ConstNoise {
        fn privacy(&mut self, _: usize, _: usize, out: &mut [f64]) {
            out.fill(self.0);
        }
        fn channel(&mut self, _: usize, _: usize, out: &mut [f64]) {
            out.fill(self.0);
        }
        fn link_privacy(&mut self, _: usize, _: usize, _: usize, out: &mut [f64]) {
            out.fill(self.0);
        }
        fn link_channel(&mut self, _: usize, _: usize, _: usize, out: &mut [f64]) {
            out.fill(self.0);
        }
    }

    fn quad_task(targets: &[&[f64]]) -> Task {
        let shards = targets
            .iter()
            .map(|b| vec![Sample { features: b.to_vec(), label: 0.0 }])
            .collect();
        Task::new(TaskKind::Quadratic, shards, 0.0, 1).unwrap()
    }

    fn states_at(values: &[&[f64]]) -> Vec<WorkerState> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| WorkerState::new(i, ModelParams::new(v.to_vec()).unwrap(), 0))
            .collect()
    }

    #[test]
    fn mixing_matrix_is_doubly_stochastic() {
        for n in 2..9 {
            let m = MixingSpec::new(n, 0.7).unwrap();
            for r in 0..n {
                assert_eq!(m.w()[(r, r)], 0.0);
                assert!((m.w().row(r).sum() - 1.0).abs() < 1e-12);
                assert!((m.w().column(r).sum() - 1.0).abs() < 1e-12);
                assert!((m.psi().row(r).sum() - 1.0).abs() < 1e-12);
                assert!((m.psi().column(r).sum() - 1.0).abs() < 1e-12);
            }
        }
        assert!(MixingSpec::new(1, 0.5).is_err());
        assert!(MixingSpec::new(3, 0.0).is_err());
        assert!(MixingSpec::new(3, 1.5).is_err());
    }

    #[test]
    fn oracle_keeps_consensus() {
        let m = MixingSpec::new(3, 0.4).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, -2.0, -2.0, -2.0]);
        let z = DMatrix::zeros(2, 3);
        let out = matrix_round_oracle(&x, &z, &z, 0.0, &m).unwrap();
        assert!((out - x).abs().max() < 1e-15);
    }

    #[test]
    fn oracle_swaps_two_columns() {
        let m = MixingSpec::new(2, 1.0).unwrap();
        let x = DMatrix::from_row_slice(1, 2, &[3.0, 7.0]);
        let z = DMatrix::zeros(1, 2);
        let out = matrix_round_oracle(&x, &z, &z, 0.5, &m).unwrap();
        assert_eq!(out, DMatrix::from_row_slice(1, 2, &[7.0, 3.0]));
        assert!(matrix_round_oracle(&x, &DMatrix::zeros(1, 3), &z, 0.5, &m).is_err());
    }

    #[test]
    fn transmit_examples() {
        // x = 0 − 0.1·1, amplitudes 2 and 1, mask 0.5
        let tx = transmit_vector(&[-0.1], &[0.5], 2.0, 1.0);
        assert!((tx[0] - 0.3).abs() < 1e-15);
        assert_eq!(transmit_vector(&[1.5, -2.0], &[0.0, 0.0], 1.0, 0.0), vec![1.5, -2.0]);
    }

    #[test]
    fn generate_signal_pinned_mask() {
        // α P = 4, β P = 1 with P = 5; gradient at x=0 towards b=-1 is 1
        let channel = ChannelConfig::homogeneous(2, 1.0, 5.0, 0.0).unwrap();
        let alloc = compute_alignment(&channel, &[0.2, 0.2]).unwrap();
        assert!((alloc.signal_amplitude(&channel, 0) - 2.0).abs() < 1e-15);
        let privacy = PrivacyParams::new(None, 1e-5, 0.5, 10.0).unwrap();
        let task = quad_task(&[&[-1.0], &[-1.0]]);
        let ctx = RoundContext {
            channel: &channel,
            alloc: &alloc,
            privacy: &privacy,
            gamma: 0.1,
            eta: 1.0,
            task: &task,
        };
        let mut states = states_at(&[&[0.0], &[0.0]]);
        let s = generate_signal(&mut states[0], &ctx, 0, &mut ConstNoise(1.0)).unwrap();
        assert_eq!(s.gradient, vec![1.0]);
        assert!((s.local[0] + 0.1).abs() < 1e-15);
        assert_eq!(states[0].last_noise, vec![0.5]);
        assert!((s.transmit[0] - 0.3).abs() < 1e-15);
    }

    fn noiseless_ctx<'a>(
        channel: &'a ChannelConfig,
        alloc: &'a PowerAllocation,
        privacy: &'a PrivacyParams,
        task: &'a Task,
        gamma: f64,
        eta: f64,
    ) -> RoundContext<'a> {
        RoundContext {
            channel,
            alloc,
            privacy,
            gamma,
            eta,
            task,
        }
    }

    #[test]
    fn two_workers_swap() {
        let channel = ChannelConfig::homogeneous(2, 1.0, 1.0, 0.0).unwrap();
        let alloc = compute_alignment(&channel, &[0.0, 0.0]).unwrap();
        let privacy = PrivacyParams::new(None, 1e-5, 0.0, 1.0).unwrap();
        let task = quad_task(&[&[0.0], &[0.0]]);
        let ctx = noiseless_ctx(&channel, &alloc, &privacy, &task, 0.0, 1.0);
        let mut states = states_at(&[&[2.0], &[-5.0]]);
        let out = dwfl_round(&mut states, &ctx, 0, &mut ConstNoise(0.0)).unwrap();
        assert_eq!(&states[0].params[..], &[-5.0]);
        assert_eq!(&states[1].params[..], &[2.0]);
        assert!(out.metrics.epsilon_round.is_infinite());
    }

    #[test]
    fn consensus_is_a_fixed_point() {
        let channel = ChannelConfig::homogeneous(3, 1.0, 1.0, 0.0).unwrap();
        let alloc = compute_alignment(&channel, &[0.0; 3]).unwrap();
        let privacy = PrivacyParams::new(None, 1e-5, 0.0, 1.0).unwrap();
        let task = quad_task(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let ctx = noiseless_ctx(&channel, &alloc, &privacy, &task, 0.3, 0.6);
        let mut states = states_at(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let out = dwfl_round(&mut states, &ctx, 0, &mut ConstNoise(0.0)).unwrap();
        for s in &states {
            assert!((s.params[0] - 1.0).abs() < 1e-15 && (s.params[1] - 2.0).abs() < 1e-15);
        }
        assert_eq!(out.metrics.consensus_error, 0.0);
        assert_eq!(out.metrics.global_grad_norm_sq, 0.0);
    }

    #[test]
    fn rejects_invalid_eta() {
        let channel = ChannelConfig::homogeneous(2, 1.0, 1.0, 0.0).unwrap();
        let alloc = compute_alignment(&channel, &[0.0, 0.0]).unwrap();
        let privacy = PrivacyParams::new(None, 1e-5, 0.0, 1.0).unwrap();
        let task = quad_task(&[&[0.0], &[0.0]]);
        let mut states = states_at(&[&[0.0], &[0.0]]);
        for eta in [0.0, 1.2] {
            let ctx = noiseless_ctx(&channel, &alloc, &privacy, &task, 0.1, eta);
            assert!(matches!(
                dwfl_round(&mut states, &ctx, 0, &mut ConstNoise(0.0)),
                Err(Error::InvalidEta(_))
            ));
        }
    }

    #[test]
    fn orthogonal_single_link_with_pinned_noise() {
        // N=2, |h|=1, P=4, β=0.75: link amplitude sqrt(1)=1, mask amplitude sqrt(3)
        let channel = ChannelConfig::homogeneous(2, 1.0, 4.0, 0.5).unwrap();
        let alloc = compute_alignment(&channel, &[0.75, 0.75]).unwrap();
        let privacy = PrivacyParams::new(None, 1e-5, 2.0, 10.0).unwrap();
        let task = quad_task(&[&[0.0], &[0.0]]);
        let ctx = noiseless_ctx(&channel, &alloc, &privacy, &task, 0.0, 0.5);
        let mut states = states_at(&[&[1.0], &[3.0]]);
        orthogonal_round(&mut states, &ctx, 0, &mut ConstNoise(1.0)).unwrap();
        // estimate of peer = x_peer + sqrt(3)·2 + 0.5
        let offset = 3f64.sqrt() * 2.0 + 0.5;
        assert!((states[0].params[0] - (1.0 + 0.5 * (3.0 + offset - 1.0))).abs() < 1e-12);
        assert!((states[1].params[0] - (3.0 + 0.5 * (1.0 + offset - 3.0))).abs() < 1e-12);
    }

    #[test]
    fn centralized_pinned_noise_and_outage() {
        // c = 1, mask amplitude 1, σ = 0.5, σ_m = 1: v = (x1 + x2) + 2·0.5 + 1
        let channel = ChannelConfig::homogeneous(2, 1.0, 2.0, 1.0).unwrap();
        let alloc = compute_alignment(&channel, &[0.5, 0.5]).unwrap();
        let privacy = PrivacyParams::new(None, 1e-5, 0.5, 10.0).unwrap();
        let task = quad_task(&[&[0.0], &[0.0]]);
        let ctx = noiseless_ctx(&channel, &alloc, &privacy, &task, 0.0, 1.0);
        let mut states = states_at(&[&[1.0], &[3.0]]);
        centralized_round(&mut states, &ctx, 0, &mut ConstNoise(1.0), true).unwrap();
        assert!((states[0].params[0] - 3.0).abs() < 1e-12);
        assert_eq!(states[0].params, states[1].params);
        assert!(matches!(
            centralized_round(&mut states, &ctx, 4, &mut ConstNoise(1.0), false),
            Err(Error::ServerOutage(4))
        ));
    }

    #[test]
    fn zero_noise_centralized_is_exact_average_step() {
        let channel = ChannelConfig::new(vec![0.5, 1.0, 2.0], vec![0.0; 3], vec![1.0, 3.0, 0.2], 0.0).unwrap();
        let alloc = compute_alignment(&channel, &[0.0; 3]).unwrap();
        let privacy = PrivacyParams::new(None, 1e-5, 0.0, 100.0).unwrap();
        let task = quad_task(&[&[1.0], &[2.0], &[6.0]]);
        let ctx = noiseless_ctx(&channel, &alloc, &privacy, &task, 0.2, 1.0);
        let mut states = states_at(&[&[0.0], &[3.0], &[-3.0]]);
        let out = centralized_round(&mut states, &ctx, 0, &mut ConstNoise(0.0), true).unwrap();
        let gbar: f64 = out.gradients.iter().map(|g| g[0]).sum::<f64>() / 3.0;
        for s in &states {
            assert!((s.params[0] - (0.0 - 0.2 * gbar)).abs() < 1e-12);
        }
    }
}
