//! Gaussian multiple-access channel and transmit-power alignment.
//!
//! Every sender pre-compensates its channel phase, so the simulation runs in
//! real baseband: a receiver observes `Σ |h_k| x̃_k + m` with `m` i.i.d.
//! Gaussian of std σ_m. Phases are carried in [`ChannelConfig`] for
//! completeness and never enter the arithmetic.

use rand::Rng;

use crate::error::{ensure_positive, Error, Result};
use crate::streams::fill_standard_normal;

/// Relative tolerance of the alignment identity `|h_k| sqrt(α_k P_k) = c`.
pub const ALIGNMENT_RTOL: f64 = 1e-12;

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    gains: Vec<f64>,
    phases: Vec<f64>,
    max_power: Vec<f64>,
    channel_noise_std: f64,
}

impl ChannelConfig {
    /// Validates and builds a channel description.
    ///
    /// `gains`, `phases` and `max_power` are per worker; their common length
    /// is the number of workers.
    pub fn new(
        gains: Vec<f64>,
        phases: Vec<f64>,
        max_power: Vec<f64>,
        channel_noise_std: f64,
    ) -> Result<Self> {
        let n = gains.len();
        if n < 2 {
            return Err(Error::TooFewWorkers(n));
        }
        for (name, v) in [("phases", &phases), ("max_power", &max_power)] {
            if v.len() != n {
                return Err(Error::WorkerCountMismatch {
                    name,
                    expected: n,
                    found: v.len(),
                });
            }
        }
        for &g in &gains {
            ensure_positive("channel gain", g)?;
        }
        for &p in &max_power {
            ensure_positive("transmit power", p)?;
        }
        if let Some(&p) = phases.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                name: "phase",
                value: p,
            });
        }
        if !(channel_noise_std >= 0.0 && channel_noise_std.is_finite()) {
            return Err(Error::NonFinite {
                name: "channel noise std",
                value: channel_noise_std,
            });
        }
        Ok(Self {
            gains,
            phases,
            max_power,
            channel_noise_std,
        })
    }

    /// Identical workers with zero phase.
    pub fn homogeneous(n: usize, gain: f64, power: f64, channel_noise_std: f64) -> Result<Self> {
        Self::new(vec![gain; n], vec![0.0; n], vec![power; n], channel_noise_std)
    }

    pub fn n_workers(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn max_power(&self) -> &[f64] {
        &self.max_power
    }

    pub fn channel_noise_std(&self) -> f64 {
        self.channel_noise_std
    }

    /// Copy with a different channel noise level.
    pub fn with_channel_noise_std(&self, channel_noise_std: f64) -> Result<Self> {
        Self::new(
            self.gains.clone(),
            self.phases.clone(),
            self.max_power.clone(),
            channel_noise_std,
        )
    }
}

/// Per-worker split of transmit power between parameter (α) and privacy mask (β).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    c: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl PowerAllocation {
    /// Common received amplitude of every sender's parameter.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// `sqrt(α_k P_k)`, the transmit amplitude on the parameter.
    pub fn signal_amplitude(&self, config: &ChannelConfig, k: usize) -> f64 {
        (self.alpha[k] * config.max_power[k]).sqrt()
    }

    /// `sqrt(β_k P_k)`, the transmit amplitude on the privacy mask.
    pub fn mask_amplitude(&self, config: &ChannelConfig, k: usize) -> f64 {
        (self.beta[k] * config.max_power[k]).sqrt()
    }

    /// `|h_k|² β_k P_k`, the received mask power per unit σ².
    pub fn received_mask_power(&self, config: &ChannelConfig, k: usize) -> f64 {
        config.gains[k].powi(2) * self.beta[k] * config.max_power[k]
    }
}

/// Chooses α so that every sender's parameter arrives with amplitude `c`.
///
/// `c` is the weakest residual link, `min_j sqrt(|h_j|² (1 - β_j) P_j)`, which
/// keeps `α_k + β_k ≤ 1` for every worker.
pub fn compute_alignment(config: &ChannelConfig, beta: &[f64]) -> Result<PowerAllocation> {
    let n = config.n_workers();
    if n < 2 {
        return Err(Error::TooFewWorkers(n));
    }
    if beta.len() != n {
        return Err(Error::WorkerCountMismatch {
            name: "beta",
            expected: n,
            found: beta.len(),
        });
    }
    for (worker, &value) in beta.iter().enumerate() {
        if !(0.0..1.0).contains(&value) {
            return Err(Error::InvalidBeta { worker, value });
        }
    }

    let c_sq = (0..n)
        .map(|j| config.gains[j].powi(2) * (1.0 - beta[j]) * config.max_power[j])
        .fold(f64::INFINITY, f64::min);
    let alpha: Vec<f64> = (0..n)
        .map(|i| {
            let a = c_sq / (config.gains[i].powi(2) * config.max_power[i]);
            // rounding can push the argmin worker a hair over its residual share
            a.min(1.0 - beta[i])
        })
        .collect();

    Ok(PowerAllocation {
        c: c_sq.sqrt(),
        alpha,
        beta: beta.to_vec(),
    })
}

/// Who is listening on the shared channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    /// Worker `i` hears every other worker.
    Worker(usize),
    /// A parameter server hears every worker.
    Server,
}

impl Receiver {
    fn hears(&self, k: usize) -> bool {
        match *self {
            Receiver::Worker(i) => i != k,
            Receiver::Server => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub receiver: Receiver,
    pub value: Vec<f64>,
}

/// Superposes the transmitted vectors heard by `receiver` and adds the given
/// channel-noise realization (already scaled to std σ_m).
///
/// `signals` is indexed by sender; the receiver's own entry is skipped.
pub fn superpose(
    signals: &[Vec<f64>],
    receiver: Receiver,
    config: &ChannelConfig,
    noise: &[f64],
) -> Result<ReceivedSignal> {
    let n = config.n_workers();
    if signals.len() != n {
        return Err(Error::WorkerCountMismatch {
            name: "signals",
            expected: n,
            found: signals.len(),
        });
    }
    if let Receiver::Worker(i) = receiver {
        if i >= n {
            return Err(Error::WorkerIndex { index: i, n });
        }
    }
    let d = noise.len();
    let mut value = vec![0.0; d];
    for (k, signal) in signals.iter().enumerate() {
        if !receiver.hears(k) {
            continue;
        }
        if signal.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: signal.len(),
            });
        }
        let gain = config.gains[k];
        for (v, s) in value.iter_mut().zip(signal) {
            *v += gain * s;
        }
    }
    for (v, m) in value.iter_mut().zip(noise) {
        *v += m;
    }
    Ok(ReceivedSignal { receiver, value })
}

/// One channel use: superposition at `receiver` plus fresh noise from `rng`.
pub fn mac_round<R: Rng + ?Sized>(
    signals: &[Vec<f64>],
    receiver: Receiver,
    config: &ChannelConfig,
    rng: &mut R,
) -> Result<ReceivedSignal> {
    let d = signals
        .iter()
        .enumerate()
        .find(|(k, _)| receiver.hears(*k))
        .map_or(0, |(_, s)| s.len());
    let mut noise = vec![0.0; d];
    if config.channel_noise_std > 0.0 {
        fill_standard_normal(rng, &mut noise);
        noise.iter_mut().for_each(|m| *m *= config.channel_noise_std);
    }
    superpose(signals, receiver, config, &noise)
}
