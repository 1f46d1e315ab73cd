//! Gaussian-mechanism accounting for over-the-air and orthogonal aggregation.
//!
//! A receiver's view of a single sender's parameter is the query output; its
//! L2 sensitivity is `2 · amplitude · γ · g_max` because one changed sample
//! moves one clipped gradient step. The Gaussian noise masking that query is
//! whatever privacy masks and channel noise reach the same receiver. Budgets
//! here are per round; [`naive_composition`] is the linear T-fold total and is
//! not tight.

use crate::channel::{ChannelConfig, PowerAllocation};
use crate::error::{ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    /// Target per-round budget, when the noise level was calibrated from one.
    pub epsilon_target: Option<f64>,
    pub delta: f64,
    /// Std of each entry of the privacy mask.
    pub sigma: f64,
    /// Clipping bound on every local gradient.
    pub g_max: f64,
}

impl PrivacyParams {
    pub fn new(epsilon_target: Option<f64>, delta: f64, sigma: f64, g_max: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::config("sigma", format!("must be finite and >= 0, got {sigma}")));
        }
        ensure_positive("g_max", g_max)?;
        if let Some(eps) = epsilon_target {
            ensure_positive("epsilon", eps)?;
        }
        Ok(Self {
            epsilon_target,
            delta,
            sigma,
            g_max,
        })
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    /// The Gaussian-mechanism guarantee used here is proved for ε in (0, 1).
    pub fn in_proven_regime(epsilon: f64) -> bool {
        epsilon > 0.0 && epsilon < 1.0
    }
}

/// `sqrt(2 ln(1.25 / δ))`.
pub fn gaussian_factor(delta: f64) -> f64 {
    (2.0 * (1.25 / delta).ln()).sqrt()
}

/// L2 sensitivity `2 c γ g_max` of the aligned aggregate to one worker's data.
pub fn l2_sensitivity(c: f64, gamma: f64, g_max: f64) -> Result<f64> {
    ensure_positive("alignment constant", c)?;
    ensure_positive("step size", gamma)?;
    ensure_positive("g_max", g_max)?;
    Ok(2.0 * c * gamma * g_max)
}

fn epsilon_from_noise(amplitude: f64, gamma: f64, g_max: f64, delta: f64, noise_var: f64) -> Result<f64> {
    if noise_var.is_nan() || noise_var <= 0.0 {
        return Err(Error::ZeroNoise);
    }
    if gamma < 0.0 {
        return Err(Error::NonPositive {
            name: "step size",
            value: gamma,
        });
    }
    Ok(2.0 * gamma * g_max * amplitude / noise_var.sqrt() * gaussian_factor(delta))
}

/// Received mask power `Σ |h_k|² β_k P_k` over the senders a listener hears.
fn mask_power(config: &ChannelConfig, alloc: &PowerAllocation, skip: Option<usize>) -> f64 {
    (0..config.n_workers())
        .filter(|&k| Some(k) != skip)
        .map(|k| alloc.received_mask_power(config, k))
        .sum()
}

fn check_receiver(config: &ChannelConfig, receiver: usize) -> Result<()> {
    let n = config.n_workers();
    if receiver >= n {
        return Err(Error::WorkerIndex { index: receiver, n });
    }
    Ok(())
}

/// Per-round budget ε_i protecting every peer of `receiver` on the shared channel.
pub fn epsilon_dwfl(
    config: &ChannelConfig,
    alloc: &PowerAllocation,
    privacy: &PrivacyParams,
    gamma: f64,
    receiver: usize,
) -> Result<f64> {
    check_receiver(config, receiver)?;
    let noise_var = mask_power(config, alloc, Some(receiver)) * privacy.sigma.powi(2)
        + config.channel_noise_std().powi(2);
    epsilon_from_noise(alloc.c(), gamma, privacy.g_max, privacy.delta, noise_var)
}

/// Worst-case ε_i over all receivers.
pub fn epsilon_dwfl_max(
    config: &ChannelConfig,
    alloc: &PowerAllocation,
    privacy: &PrivacyParams,
    gamma: f64,
) -> Result<f64> {
    (0..config.n_workers()).try_fold(0.0f64, |acc, i| {
        Ok(acc.max(epsilon_dwfl(config, alloc, privacy, gamma, i)?))
    })
}

/// Budget against a parameter server that hears all workers on one channel use.
pub fn epsilon_centralized(
    config: &ChannelConfig,
    alloc: &PowerAllocation,
    privacy: &PrivacyParams,
    gamma: f64,
) -> Result<f64> {
    let noise_var =
        mask_power(config, alloc, None) * privacy.sigma.powi(2) + config.channel_noise_std().powi(2);
    epsilon_from_noise(alloc.c(), gamma, privacy.g_max, privacy.delta, noise_var)
}

/// Budget of a dedicated link `j -> i` whose parameter arrives with the full
/// amplitude `|h_j| sqrt(P_j)`. Has no dependence on the number of workers.
pub fn epsilon_orthogonal(
    gain: f64,
    power: f64,
    beta: f64,
    channel_noise_std: f64,
    privacy: &PrivacyParams,
    gamma: f64,
) -> Result<f64> {
    epsilon_orthogonal_link(gain * power.sqrt(), gain, power, beta, channel_noise_std, privacy, gamma)
}

/// Budget of a dedicated link whose parameter arrives with `amplitude`.
pub fn epsilon_orthogonal_link(
    amplitude: f64,
    gain: f64,
    power: f64,
    beta: f64,
    channel_noise_std: f64,
    privacy: &PrivacyParams,
    gamma: f64,
) -> Result<f64> {
    let noise_var = gain.powi(2) * beta * power * privacy.sigma.powi(2) + channel_noise_std.powi(2);
    epsilon_from_noise(amplitude, gamma, privacy.g_max, privacy.delta, noise_var)
}

/// Received amplitude of sender `j`'s parameter on its own orthogonal link
/// when it spends all residual power `(1 - β_j) P_j` on the parameter.
pub fn orthogonal_amplitude(config: &ChannelConfig, alloc: &PowerAllocation, j: usize) -> f64 {
    config.gains()[j] * ((1.0 - alloc.beta()[j]) * config.max_power()[j]).sqrt()
}

/// Worst-case per-link budget of the orthogonal baseline.
pub fn epsilon_orthogonal_max(
    config: &ChannelConfig,
    alloc: &PowerAllocation,
    privacy: &PrivacyParams,
    gamma: f64,
) -> Result<f64> {
    (0..config.n_workers()).try_fold(0.0f64, |acc, j| {
        let eps = epsilon_orthogonal_link(
            orthogonal_amplitude(config, alloc, j),
            config.gains()[j],
            config.max_power()[j],
            alloc.beta()[j],
            config.channel_noise_std(),
            privacy,
            gamma,
        )?;
        Ok(acc.max(eps))
    })
}

/// Smallest σ such that a query of the given `amplitude`, masked by
/// `mask_power · σ² + σ_m²`, meets `target`.
fn sigma_for(
    target: f64,
    amplitude: f64,
    gamma: f64,
    g_max: f64,
    delta: f64,
    mask_power: f64,
    channel_noise_std: f64,
) -> Result<f64> {
    ensure_positive("target epsilon", target)?;
    let required_std = 2.0 * amplitude * gamma * g_max * gaussian_factor(delta) / target;
    let shortfall = required_std.powi(2) - channel_noise_std.powi(2);
    if shortfall <= 0.0 {
        return Ok(0.0);
    }
    if mask_power.is_nan() || mask_power <= 0.0 {
        return Err(Error::Infeasible(format!(
            "no sender spends power on a privacy mask and channel noise alone gives \
             epsilon above {target}"
        )));
    }
    Ok((shortfall / mask_power).sqrt())
}

/// Smallest σ for which [`epsilon_dwfl`] at `receiver` does not exceed `target`.
pub fn calibrate_sigma(
    target: f64,
    config: &ChannelConfig,
    alloc: &PowerAllocation,
    gamma: f64,
    g_max: f64,
    delta: f64,
    receiver: usize,
) -> Result<f64> {
    check_receiver(config, receiver)?;
    sigma_for(
        target,
        alloc.c(),
        gamma,
        g_max,
        delta,
        mask_power(config, alloc, Some(receiver)),
        config.channel_noise_std(),
    )
}

/// Smallest common σ meeting `target` at every receiver of the shared channel.
pub fn calibrate_sigma_dwfl(
    target: f64,
    config: &ChannelConfig,
    alloc: &PowerAllocation,
    gamma: f64,
    g_max: f64,
    delta: f64,
) -> Result<f64> {
    (0..config.n_workers()).try_fold(0.0f64, |acc, i| {
        Ok(acc.max(calibrate_sigma(target, config, alloc, gamma, g_max, delta, i)?))
    })
}

/// Smallest σ meeting `target` against a parameter server.
pub fn calibrate_sigma_centralized(
    target: f64,
    config: &ChannelConfig,
    alloc: &PowerAllocation,
    gamma: f64,
    g_max: f64,
    delta: f64,
) -> Result<f64> {
    sigma_for(
        target,
        alloc.c(),
        gamma,
        g_max,
        delta,
        mask_power(config, alloc, None),
        config.channel_noise_std(),
    )
}

/// Smallest common σ meeting `target` on every orthogonal link.
pub fn calibrate_sigma_orthogonal(
    target: f64,
    config: &ChannelConfig,
    alloc: &PowerAllocation,
    gamma: f64,
    g_max: f64,
    delta: f64,
) -> Result<f64> {
    (0..config.n_workers()).try_fold(0.0f64, |acc, j| {
        let sigma = sigma_for(
            target,
            orthogonal_amplitude(config, alloc, j),
            gamma,
            g_max,
            delta,
            alloc.received_mask_power(config, j),
            config.channel_noise_std(),
        )?;
        Ok(acc.max(sigma))
    })
}

/// Linear composition of a per-round budget over `rounds` rounds.
pub fn naive_composition(epsilon_round: f64, rounds: usize) -> f64 {
    epsilon_round * rounds as f64
}

/// Scales `g` onto the ball of radius `g_max` when it lies outside.
pub fn clip_gradient(g: &[f64], g_max: f64) -> Vec<f64> {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= g_max {
        return g.to_vec();
    }
    let mut scale = g_max / norm;
    loop {
        let out: Vec<f64> = g.iter().map(|v| v * scale).collect();
        // rounding can land a hair outside the ball; shrink until a second clip is a no-op
        if out.iter().map(|v| v * v).sum::<f64>().sqrt() <= g_max {
            return out;
        }
        scale *= 1.0 - f64::EPSILON;
    }
}
