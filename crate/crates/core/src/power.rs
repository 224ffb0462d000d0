//! Closed-form CR-NOMA power allocation for fixed antenna positions.
//!
//! With the channel gains fixed, the secondary user's rate is monotone in
//! its power fraction, so the optimal split saturates the binding QoS
//! constraint: alpha_s = max{0, A} with
//!
//! ```text
//! A = min over m of (P|h_m|^2 - N sigma_m^2 gamma_p) / (P|h_m|^2 (1 + gamma_p))
//! ```
//!
//! When A < 0 even alpha_p = 1 cannot satisfy the binding user's target, so
//! the allocation is returned clamped together with an infeasibility flag.

use crate::model::{
    primary_sinr, sic_sinr_at_secondary, EffectiveChannels, PowerAllocation, SystemConfig,
};

/// Slack absorbed by the QoS checks at constraint boundaries.
pub const QOS_TOLERANCE: f64 = 1e-9;

/// Result of one closed-form power update.
#[derive(Debug, Clone, Copy)]
pub struct PowerUpdateResult {
    pub alloc: PowerAllocation,
    /// The bound A before clamping to [0, 1].
    pub cap_a: f64,
    /// True when A > 0, i.e. the secondary user receives nonzero power.
    pub feasible_with_positive_secondary: bool,
    /// True when even alpha_p = 1 violates a QoS constraint.
    pub infeasible_qos: bool,
}

/// Outcome of checking both QoS constraints at a given allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QosStatus {
    /// Primary user's direct-decode SINR meets gamma_p.
    pub primary_ok: bool,
    /// Secondary user's SIC step for the primary's message meets gamma_p.
    pub sic_ok: bool,
}

impl QosStatus {
    pub fn both(&self) -> bool {
        self.primary_ok && self.sic_ok
    }
}

/// Optimal power split for fixed channels.
pub fn optimal_power_split(
    cfg: &SystemConfig,
    channels: &EffectiveChannels,
    n_antennas: usize,
) -> PowerUpdateResult {
    let p = cfg.transmit_power;
    let g = cfg.qos_target_gamma_p;
    let n = n_antennas as f64;

    let gain_p = channels.h_p.norm_sqr();
    let gain_s = channels.h_s.norm_sqr();
    if gain_p <= 0.0 || gain_s <= 0.0 {
        // Degenerate channel: nothing reaches one of the users.
        let alloc = PowerAllocation::from_secondary(0.0).expect("0 is in range");
        return PowerUpdateResult {
            alloc,
            cap_a: f64::NEG_INFINITY,
            feasible_with_positive_secondary: false,
            infeasible_qos: true,
        };
    }

    let frac = |gain: f64, sigma2: f64| (p * gain - n * sigma2 * g) / (p * gain * (1.0 + g));
    let cap_a = frac(gain_p, cfg.noise_power_primary).min(frac(gain_s, cfg.noise_power_secondary));

    let alpha_s = cap_a.clamp(0.0, 1.0);
    let alloc = PowerAllocation::from_secondary(alpha_s).expect("clamped to range");
    let status = verify_qos(cfg, channels, &alloc, n_antennas);
    PowerUpdateResult {
        alloc,
        cap_a,
        feasible_with_positive_secondary: cap_a > 0.0,
        infeasible_qos: !status.both(),
    }
}

/// Check both QoS constraints at an allocation, with `QOS_TOLERANCE` slack.
pub fn verify_qos(
    cfg: &SystemConfig,
    channels: &EffectiveChannels,
    alloc: &PowerAllocation,
    n_antennas: usize,
) -> QosStatus {
    let g = cfg.qos_target_gamma_p;
    QosStatus {
        primary_ok: primary_sinr(cfg, channels.h_p, alloc, n_antennas) >= g - QOS_TOLERANCE,
        sic_ok: sic_sinr_at_secondary(cfg, channels.h_s, alloc, n_antennas) >= g - QOS_TOLERANCE,
    }
}
