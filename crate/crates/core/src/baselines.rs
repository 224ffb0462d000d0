//! Comparison baselines: OMA transmission and a fixed-layout deployment.
//!
//! The OMA baseline serves the two users in separate time slots, each with
//! full transmit power and its own optimized antenna positions (the rate
//! problems decouple across slots). The fixed baseline keeps the antennas
//! statically centered over the service region with half-wavelength
//! spacing and only runs the closed-form power update; no position
//! optimization. It stands in for a conventional fixed-antenna system under
//! the identical waveguide signal model and is labeled accordingly in all
//! outputs.

use serde::{Deserialize, Serialize};

use crate::model::{
    effective_channel, noma_rates, oma_rate, AntennaLayout, Solution, SystemConfig, User, UserPair,
};
use crate::power::optimal_power_split;
use crate::sca::{maximize_user_gain, ScaError, SolverOptions};

/// Label attached to fixed-baseline outputs. The conventional beamforming
/// reference is not implemented; this baseline isolates the effect of
/// position flexibility alone.
pub const FIXED_BASELINE_LABEL: &str = "fixed-layout (non-SDR)";

/// Per-slot OMA result: one optimized layout per user plus the TDMA rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmaSolution {
    pub layout_p: AntennaLayout,
    pub layout_s: AntennaLayout,
    pub rate_p: f64,
    pub rate_s: f64,
    pub sum_rate: f64,
    pub inner_iters: usize,
}

/// Optimize each user's slot independently and report the TDMA rates.
pub fn oma_solve(
    cfg: &SystemConfig,
    users: &UserPair,
    n: usize,
    opts: &SolverOptions,
) -> Result<OmaSolution, ScaError> {
    let out_p = maximize_user_gain(cfg, users, User::Primary, n, opts)?;
    let out_s = maximize_user_gain(cfg, users, User::Secondary, n, opts)?;
    let rate_p = oma_rate(cfg, users, &out_p.layout, User::Primary)?;
    let rate_s = oma_rate(cfg, users, &out_s.layout, User::Secondary)?;
    Ok(OmaSolution {
        layout_p: out_p.layout,
        layout_s: out_s.layout,
        rate_p,
        rate_s,
        sum_rate: rate_p + rate_s,
        inner_iters: out_p.inner_iters + out_s.inner_iters,
    })
}

/// Static layout centered above the service-region centroid with
/// half-wavelength spacing.
pub fn fixed_layout(cfg: &SystemConfig, n: usize) -> AntennaLayout {
    let spacing = cfg.wavelength() / 2.0;
    let x1 = cfg.region_side_d / 2.0 - (n - 1) as f64 * spacing / 2.0;
    AntennaLayout::equally_spaced(x1, spacing, n)
}

/// NOMA over the static centered layout: closed-form power update only.
pub fn fixed_baseline(cfg: &SystemConfig, users: &UserPair, n: usize) -> Result<Solution, ScaError> {
    let layout = fixed_layout(cfg, n);
    let channels = effective_channel(cfg, users, &layout)?;
    let split = optimal_power_split(cfg, &channels, n);
    let (rate_p, rate_s) = noma_rates(cfg, &channels, &split.alloc, n);
    Ok(Solution {
        layout,
        alloc: split.alloc,
        rate_p: if split.infeasible_qos { 0.0 } else { rate_p },
        rate_s: if split.infeasible_qos { 0.0 } else { rate_s },
        infeasible_qos: split.infeasible_qos,
        evaluations: 1,
    })
}
