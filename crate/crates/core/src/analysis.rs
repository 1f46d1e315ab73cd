//! Theoretical quantities reported next to the empirical curves: the
//! effective noise σ_z², the finite-horizon convergence bound, the tuned
//! step size and the consensus error.

use crate::channel::{ChannelConfig, PowerAllocation};
use crate::error::{ensure_positive, Error, Result};

/// Effective per-sender noise variance after de-scaling by `c`:
/// `max_k |h_k|² β_k P_k σ² / c² + σ_m² / (c² (N−1)²)`.
pub fn sigma_z_sq(config: &ChannelConfig, alloc: &PowerAllocation, sigma: f64) -> f64 {
    let n = config.n_workers() as f64;
    let c_sq = alloc.c().powi(2);
    let channel = config.channel_noise_std().powi(2) / (c_sq * (n - 1.0).powi(2));
    (0..config.n_workers())
        .map(|k| alloc.received_mask_power(config, k) * sigma * sigma / c_sq + channel)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisParams {
    pub lipschitz: f64,
    pub sigma_f: f64,
    pub zeta: f64,
    /// `f(x̄ at start) − f*`.
    pub c4: f64,
    pub sigma_z_sq: f64,
    pub dimension: usize,
    pub rounds: usize,
    pub n_workers: usize,
}

impl AnalysisParams {
    /// `((N−1)/N)²`.
    pub fn c2(&self) -> f64 {
        let n = self.n_workers as f64;
        ((n - 1.0) / n).powi(2)
    }
}

/// Bound on `(1/T) Σ_t E‖∇f(x̄_t)‖²` after `params.rounds` rounds with step `gamma`.
///
/// Requires `L ≤ 1` and `1 − 12 L² C₂ γ² > 0`; the latter is exactly the
/// condition for the left-hand coefficient `γ/2 − 3γ³L²C₂/(1 − 6C₂L²γ²)` to be
/// positive.
pub fn convergence_bound(params: &AnalysisParams, gamma: f64) -> Result<f64> {
    let AnalysisParams {
        lipschitz: l,
        sigma_f,
        zeta,
        c4,
        sigma_z_sq,
        dimension,
        rounds,
        n_workers,
    } = *params;
    if n_workers < 2 {
        return Err(Error::TooFewWorkers(n_workers));
    }
    if rounds == 0 {
        return Err(Error::Infeasible("the bound needs at least one round".into()));
    }
    ensure_positive("step size", gamma)?;
    for (name, v) in [("sigma_f", sigma_f), ("zeta", zeta), ("c4", c4), ("sigma_z_sq", sigma_z_sq)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
        }
    }
    if !(l > 0.0 && l <= 1.0) {
        return Err(Error::Infeasible(format!("Lipschitz constant must lie in (0, 1], got {l}")));
    }
    let c2 = params.c2();
    let l2 = l * l;
    let slack = 1.0 - 6.0 * c2 * l2 * gamma * gamma;
    if 1.0 - 12.0 * l2 * c2 * gamma * gamma <= 0.0 {
        return Err(Error::Infeasible(format!(
            "1 - 12 L^2 C2 gamma^2 = {} is not positive",
            1.0 - 12.0 * l2 * c2 * gamma * gamma
        )));
    }
    let lhs = gamma / 2.0 - 3.0 * gamma.powi(3) * l2 * c2 / slack;
    let t = rounds as f64;
    let n = n_workers as f64;
    let d = dimension as f64;
    let rhs = c4
        + (l * gamma * gamma / (2.0 * n) + c2 * l2 * gamma.powi(3) / slack) * sigma_f * sigma_f * t
        + 3.0 * gamma.powi(3) * l2 * t * c2 * zeta * zeta / slack
        + gamma * l2 * d * t * sigma_z_sq / slack;
    Ok(rhs / (lhs * t))
}

/// Step size `(1/σ_f) sqrt(2 C₄ N / (L T))`.
pub fn tuned_step_size(c4: f64, n_workers: usize, lipschitz: f64, rounds: usize, sigma_f: f64) -> Result<f64> {
    ensure_positive("c4", c4)?;
    ensure_positive("number of workers", n_workers as f64)?;
    ensure_positive("Lipschitz constant", lipschitz)?;
    ensure_positive("rounds", rounds as f64)?;
    ensure_positive("sigma_f", sigma_f)?;
    Ok((2.0 * c4 * n_workers as f64 / (lipschitz * rounds as f64)).sqrt() / sigma_f)
}

/// `‖X (I − 𝟙𝟙ᵀ/N)‖_F²` for `X` given as one column per worker.
pub fn consensus_error(columns: &[impl AsRef<[f64]>]) -> f64 {
    let Some(first) = columns.first() else {
        return 0.0;
    };
    let d = first.as_ref().len();
    let n = columns.len() as f64;
    let mut mean = vec![0.0; d];
    for col in columns {
        for (m, v) in mean.iter_mut().zip(col.as_ref()) {
            *m += v / n;
        }
    }
    columns
        .iter()
        .map(|col| col.as_ref().iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::compute_alignment;
    use proptest::prelude::*;

    fn params() -> AnalysisParams {
        AnalysisParams {
            lipschitz: 1.0,
            sigma_f: 0.5,
            zeta: 0.3,
            c4: 2.0,
            sigma_z_sq: 0.1,
            dimension: 4,
            rounds: 100,
            n_workers: 5,
        }
    }

    #[test]
    fn sigma_z_homogeneous() {
        let cfg = ChannelConfig::homogeneous(4, 1.0, 2.0, 0.0).unwrap();
        let alloc = compute_alignment(&cfg, &[0.5; 4]).unwrap();
        assert!((sigma_z_sq(&cfg, &alloc, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(sigma_z_sq(&cfg, &alloc, 0.0), 0.0);
    }

    #[test]
    fn sigma_z_picks_loudest_mask() {
        let cfg = ChannelConfig::new(vec![1.0, 2.0, 1.0], vec![0.0; 3], vec![2.0, 2.0, 3.0], 0.0).unwrap();
        let alloc = compute_alignment(&cfg, &[0.5, 0.5, 0.2]).unwrap();
        let loudest = (0..3).map(|k| alloc.received_mask_power(&cfg, k)).fold(0.0, f64::max);
        let expected = loudest * 0.81 / alloc.c().powi(2);
        assert!((sigma_z_sq(&cfg, &alloc, 0.9) - expected).abs() < 1e-12);
    }

    #[test]
    fn sigma_z_channel_share() {
        let cfg = ChannelConfig::homogeneous(3, 1.0, 4.0, 2.0).unwrap();
        let alloc = compute_alignment(&cfg, &[0.0; 3]).unwrap();
        // c = 2, σ_m² / (c² (N−1)²) = 4 / (4 · 4)
        assert!((sigma_z_sq(&cfg, &alloc, 0.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn noiseless_optimal_start_gives_zero_bound() {
        let p = AnalysisParams {
            sigma_f: 0.0,
            zeta: 0.0,
            c4: 0.0,
            sigma_z_sq: 0.0,
            ..params()
        };
        assert_eq!(convergence_bound(&p, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn bound_hand_evaluation() {
        // N=2, L=1, γ=0.1: C₂=0.25, slack=1−0.015=0.985, lhs=0.05−0.00075/0.985
        let p = AnalysisParams {
            lipschitz: 1.0,
            sigma_f: 1.0,
            zeta: 0.0,
            c4: 1.0,
            sigma_z_sq: 0.0,
            dimension: 1,
            rounds: 10,
            n_workers: 2,
        };
        let slack = 0.985;
        let lhs = 0.05 - 0.00075 / slack;
        let rhs = 1.0 + (0.01 / 4.0 + 0.25 * 0.001 / slack) * 10.0;
        let expected = rhs / (lhs * 10.0);
        assert!((convergence_bound(&p, 0.1).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn bound_reports_violations() {
        let mut p = params();
        p.lipschitz = 1.5;
        assert!(matches!(convergence_bound(&p, 0.1), Err(Error::Infeasible(_))));
        let p = params();
        assert!(matches!(convergence_bound(&p, 1.0), Err(Error::Infeasible(_))));
        assert!(convergence_bound(&AnalysisParams { rounds: 0, ..p }, 0.1).is_err());
    }

    #[test]
    fn tuned_step_size_scaling() {
        assert!((tuned_step_size(1.0, 2, 1.0, 100, 1.0).unwrap() - 0.2).abs() < 1e-15);
        let g = tuned_step_size(1.5, 3, 0.8, 50, 0.7).unwrap();
        assert!((tuned_step_size(1.5, 3, 0.8, 200, 0.7).unwrap() - g / 2.0).abs() < 1e-15);
        assert!((tuned_step_size(1.5, 12, 0.8, 50, 0.7).unwrap() - 2.0 * g).abs() < 1e-15);
        assert!(tuned_step_size(0.0, 2, 1.0, 100, 1.0).is_err());
        assert!(tuned_step_size(1.0, 2, 1.0, 0, 1.0).is_err());
    }

    #[test]
    fn consensus_examples() {
        assert_eq!(consensus_error(&[vec![1.0, 2.0], vec![1.0, 2.0]]), 0.0);
        assert_eq!(consensus_error(&[vec![0.0], vec![2.0]]), 2.0);
        assert_eq!(consensus_error(&Vec::<Vec<f64>>::new()), 0.0);
    }

    proptest! {
        #[test]
        fn consensus_shift_invariant(
            cols in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..6),
            shift in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let shifted: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
            prop_assert!((consensus_error(&cols) - consensus_error(&shifted)).abs() < 1e-9);
        }

        #[test]
        fn bound_monotone(
            sigma_f in 0.0f64..2.0,
            zeta in 0.0f64..2.0,
            sz in 0.0f64..2.0,
            d in 1usize..20,
            bump in 0.01f64..1.0,
        ) {
            let p = AnalysisParams { sigma_f, zeta, sigma_z_sq: sz, dimension: d, ..params() };
            let base = convergence_bound(&p, 0.1).unwrap();
            for q in [
                AnalysisParams { sigma_f: (sigma_f * sigma_f + bump).sqrt(), ..p },
                AnalysisParams { zeta: zeta + bump, ..p },
                AnalysisParams { sigma_z_sq: sz + bump, ..p },
                AnalysisParams { dimension: d + 1, ..p },
            ] {
                prop_assert!(convergence_bound(&q, 0.1).unwrap() > base);
            }
        }
    }
}
