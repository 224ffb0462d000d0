//! Physical system model for a waveguide-fed pinching-antenna downlink.
//!
//! A single dielectric waveguide runs parallel to the x-axis at height `d`.
//! `N` pinching antennas sit at positions `x̃_1 < … < x̃_N` along it and
//! jointly serve two ground users (primary `p`, secondary `s`) at z = 0.
//! Each antenna contributes one term to the effective channel of user `m`:
//! amplitude `√η / dist` (free-space path loss) and phase
//! `(2π/λ)·dist + (2π/λ_g)·(x̃_n − x_0)` (free-space plus in-waveguide
//! propagation from the feed point `x_0`).
//!
//! All types are immutable values and all operations are pure functions, so
//! everything here is safe to evaluate from any number of threads.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Spacing violations smaller than this are accepted as floating-point slack.
pub const SPACING_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("layout must contain at least one antenna")]
    EmptyLayout,
    #[error("antenna positions must be strictly increasing with spacing >= delta: {0}")]
    SpacingViolation(String),
    #[error("antenna at x = {position} lies behind the feed point x0 = {feed} with in-waveguide attenuation enabled")]
    AntennaBehindFeed { position: f64, feed: f64 },
    #[error("power allocation out of range: alpha_s = {0}")]
    BadAllocation(f64),
}

/// Convert a dBm figure to Watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Convert Watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// All physical constants and protocol parameters of one scenario.
///
/// Powers are stored in Watts and frequencies in Hz; dBm/GHz conversions
/// happen at the CLI/config boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Carrier frequency f_c, Hz.
    pub carrier_frequency: f64,
    /// Total transmit power P, Watts, shared uniformly by the N antennas.
    pub transmit_power: f64,
    /// Noise power at the primary user, Watts.
    pub noise_power_primary: f64,
    /// Noise power at the secondary user, Watts.
    pub noise_power_secondary: f64,
    /// Primary user's target SINR gamma_p (linear).
    pub qos_target_gamma_p: f64,
    /// Waveguide height d above the user plane, meters.
    pub waveguide_height_d: f64,
    /// Minimum antenna spacing Delta, meters.
    pub min_spacing_delta: f64,
    /// Side length D of the square deployment region, meters.
    pub region_side_d: f64,
    /// Waveguide feed-point x-coordinate, meters.
    pub feed_point_x0: f64,
    /// Effective refractive index n_neff of the waveguide.
    pub effective_refractive_index: f64,
    /// In-waveguide attenuation, dB per meter. Zero disables attenuation.
    pub inwaveguide_attenuation: f64,
}

impl SystemConfig {
    /// Scenario defaults used throughout the experiments: noise -70 dBm at
    /// both users, d = 3 m, spacing lambda/2, n_neff = 1.4, feed at x = 0,
    /// no in-waveguide attenuation.
    pub fn defaults(carrier_frequency: f64, transmit_power: f64, gamma_p: f64, side_d: f64) -> Self {
        let lambda = SPEED_OF_LIGHT / carrier_frequency;
        SystemConfig {
            carrier_frequency,
            transmit_power,
            noise_power_primary: dbm_to_watts(-70.0),
            noise_power_secondary: dbm_to_watts(-70.0),
            qos_target_gamma_p: gamma_p,
            waveguide_height_d: 3.0,
            min_spacing_delta: lambda / 2.0,
            region_side_d: side_d,
            feed_point_x0: 0.0,
            effective_refractive_index: 1.4,
            inwaveguide_attenuation: 0.0,
        }
    }

    /// Free-space wavelength lambda = c / f_c, meters.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Guided wavelength lambda_g = lambda / n_neff, meters.
    pub fn guided_wavelength(&self) -> f64 {
        self.wavelength() / self.effective_refractive_index
    }

    /// Path-loss constant eta = c^2 / (16 pi^2 f_c^2), m^2.
    pub fn eta(&self) -> f64 {
        let c = SPEED_OF_LIGHT;
        c * c / (16.0 * std::f64::consts::PI.powi(2) * self.carrier_frequency.powi(2))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("carrier_frequency", self.carrier_frequency),
            ("transmit_power", self.transmit_power),
            ("noise_power_primary", self.noise_power_primary),
            ("noise_power_secondary", self.noise_power_secondary),
            ("qos_target_gamma_p", self.qos_target_gamma_p),
            ("waveguide_height_d", self.waveguide_height_d),
            ("min_spacing_delta", self.min_spacing_delta),
            ("region_side_d", self.region_side_d),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidConfig(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if !(self.effective_refractive_index >= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "effective_refractive_index must be >= 1, got {}",
                self.effective_refractive_index
            )));
        }
        if self.inwaveguide_attenuation < 0.0 || !self.inwaveguide_attenuation.is_finite() {
            return Err(ModelError::InvalidConfig(format!(
                "inwaveguide_attenuation must be >= 0 dB/m, got {}",
                self.inwaveguide_attenuation
            )));
        }
        if !self.feed_point_x0.is_finite() {
            return Err(ModelError::InvalidConfig("feed_point_x0 must be finite".into()));
        }
        Ok(())
    }
}

/// Identifies one of the two users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum User {
    Primary,
    Secondary,
}

/// Ground positions of the primary and secondary users (z = 0 plane).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UserPair {
    pub x_p: f64,
    pub y_p: f64,
    pub x_s: f64,
    pub y_s: f64,
}

impl UserPair {
    pub fn new(x_p: f64, y_p: f64, x_s: f64, y_s: f64) -> Self {
        UserPair { x_p, y_p, x_s, y_s }
    }

    pub fn x(&self, m: User) -> f64 {
        match m {
            User::Primary => self.x_p,
            User::Secondary => self.x_s,
        }
    }

    pub fn y(&self, m: User) -> f64 {
        match m {
            User::Primary => self.y_p,
            User::Secondary => self.y_s,
        }
    }

    /// Squared-distance constant C_m = y_m^2 + d^2, m^2.
    pub fn c_const(&self, m: User, d: f64) -> f64 {
        let y = self.y(m);
        y * y + d * d
    }

    /// Swap the primary and secondary roles.
    pub fn swapped(&self) -> Self {
        UserPair { x_p: self.x_s, y_p: self.y_s, x_s: self.x_p, y_s: self.y_p }
    }
}

/// Ordered pinching-antenna x-coordinates along the waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaLayout {
    positions: Vec<f64>,
}

impl AntennaLayout {
    /// Build a layout, enforcing strictly increasing positions with
    /// spacing >= `min_spacing - SPACING_SLACK`.
    pub fn new(positions: Vec<f64>, min_spacing: f64) -> Result<Self, ModelError> {
        if positions.is_empty() {
            return Err(ModelError::EmptyLayout);
        }
        for w in positions.windows(2) {
            let gap = w[1] - w[0];
            if gap < min_spacing - SPACING_SLACK {
                return Err(ModelError::SpacingViolation(format!(
                    "gap {gap} between {} and {} is below {min_spacing}",
                    w[0], w[1]
                )));
            }
        }
        Ok(AntennaLayout { positions })
    }

    /// Single-antenna layout.
    pub fn single(x: f64) -> Self {
        AntennaLayout { positions: vec![x] }
    }

    /// Equally spaced layout starting at `x1` with gap `spacing`.
    pub fn equally_spaced(x1: f64, spacing: f64, n: usize) -> Self {
        AntennaLayout {
            positions: (0..n).map(|k| x1 + k as f64 * spacing).collect(),
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Complex effective channel gains (h̃_p, h̃_s) for one layout.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveChannels {
    pub h_p: Complex64,
    pub h_s: Complex64,
}

impl EffectiveChannels {
    pub fn gain(&self, m: User) -> Complex64 {
        match m {
            User::Primary => self.h_p,
            User::Secondary => self.h_s,
        }
    }
}

/// Power split between the superposed messages; fractions sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub alpha_p: f64,
    pub alpha_s: f64,
}

impl PowerAllocation {
    /// Build from the secondary fraction; alpha_p is 1 - alpha_s exactly.
    pub fn from_secondary(alpha_s: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&alpha_s) {
            return Err(ModelError::BadAllocation(alpha_s));
        }
        Ok(PowerAllocation { alpha_p: 1.0 - alpha_s, alpha_s })
    }
}

/// A solved instance: layout, power split, achieved rates and diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub layout: AntennaLayout,
    pub alloc: PowerAllocation,
    pub rate_p: f64,
    pub rate_s: f64,
    /// True when no power split meets the primary QoS at these positions.
    pub infeasible_qos: bool,
    /// Free-form solver diagnostics (iteration counts etc.).
    pub evaluations: u64,
}

/// Free-space distance from an antenna at x to user m:
/// sqrt((x - x_m)^2 + C_m).
pub fn free_space_distance(users: &UserPair, m: User, x: f64, d: f64) -> f64 {
    let dx = x - users.x(m);
    (dx * dx + users.c_const(m, d)).sqrt()
}

/// Effective channel gains of both users for the given layout.
///
/// Each antenna contributes `√η·e^{-j[(2π/λ)d_{m,n} + (2π/λ_g)(x̃_n - x_0)]} / d_{m,n}`.
/// With in-waveguide attenuation `a` dB/m enabled, every term is further
/// scaled by `10^(-a·(x̃_n - x_0)/20)`; antennas behind the feed point are
/// rejected in that mode since the signal only propagates forward.
pub fn effective_channel(
    cfg: &SystemConfig,
    users: &UserPair,
    layout: &AntennaLayout,
) -> Result<EffectiveChannels, ModelError> {
    let attenuating = cfg.inwaveguide_attenuation > 0.0;
    if attenuating {
        for &x in layout.positions() {
            if x < cfg.feed_point_x0 - 1e-12 {
                return Err(ModelError::AntennaBehindFeed { position: x, feed: cfg.feed_point_x0 });
            }
        }
    }
    let sqrt_eta = cfg.eta().sqrt();
    let k_free = 2.0 * std::f64::consts::PI / cfg.wavelength();
    let k_guide = 2.0 * std::f64::consts::PI / cfg.guided_wavelength();
    let d = cfg.waveguide_height_d;

    let mut gains = [Complex64::new(0.0, 0.0); 2];
    for (slot, m) in [User::Primary, User::Secondary].into_iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for &x in layout.positions() {
            let dist = free_space_distance(users, m, x, d);
            let phase = k_free * dist + k_guide * (x - cfg.feed_point_x0);
            let mut amp = sqrt_eta / dist;
            if attenuating {
                amp *= 10f64.powf(-cfg.inwaveguide_attenuation * (x - cfg.feed_point_x0) / 20.0);
            }
            acc += Complex64::from_polar(amp, -phase);
        }
        gains[slot] = acc;
    }
    Ok(EffectiveChannels { h_p: gains[0], h_s: gains[1] })
}

/// SINR of the secondary user's first SIC step (decoding the primary's
/// message): alpha_p P |h_s|^2 / (alpha_s P |h_s|^2 + N sigma_s^2).
pub fn sic_sinr_at_secondary(
    cfg: &SystemConfig,
    h_s: Complex64,
    alloc: &PowerAllocation,
    n_antennas: usize,
) -> f64 {
    let g = h_s.norm_sqr();
    let p = cfg.transmit_power;
    alloc.alpha_p * p * g / (alloc.alpha_s * p * g + n_antennas as f64 * cfg.noise_power_secondary)
}

/// SNR of the secondary user decoding its own message after SIC.
pub fn secondary_snr(
    cfg: &SystemConfig,
    h_s: Complex64,
    alloc: &PowerAllocation,
    n_antennas: usize,
) -> f64 {
    alloc.alpha_s * cfg.transmit_power * h_s.norm_sqr()
        / (n_antennas as f64 * cfg.noise_power_secondary)
}

/// SINR of the primary user decoding its message directly (the secondary's
/// superposed signal is interference).
pub fn primary_sinr(
    cfg: &SystemConfig,
    h_p: Complex64,
    alloc: &PowerAllocation,
    n_antennas: usize,
) -> f64 {
    let g = h_p.norm_sqr();
    let p = cfg.transmit_power;
    alloc.alpha_p * p * g / (alloc.alpha_s * p * g + n_antennas as f64 * cfg.noise_power_primary)
}

/// Achievable NOMA rates `(rate_p, rate_s)` in bits/s/Hz.
///
/// SIC validity is not checked here; callers gate on the QoS constraints.
pub fn noma_rates(
    cfg: &SystemConfig,
    channels: &EffectiveChannels,
    alloc: &PowerAllocation,
    n_antennas: usize,
) -> (f64, f64) {
    let rp = (1.0 + primary_sinr(cfg, channels.h_p, alloc, n_antennas)).log2();
    let rs = (1.0 + secondary_snr(cfg, channels.h_s, alloc, n_antennas)).log2();
    (rp, rs)
}

/// OMA (TDMA) rate of user m with full power during its slot; the 1/2
/// factor accounts for time sharing.
pub fn oma_rate(
    cfg: &SystemConfig,
    users: &UserPair,
    layout: &AntennaLayout,
    m: User,
) -> Result<f64, ModelError> {
    let ch = effective_channel(cfg, users, layout)?;
    let sigma2 = match m {
        User::Primary => cfg.noise_power_primary,
        User::Secondary => cfg.noise_power_secondary,
    };
    let snr = ch.gain(m).norm_sqr() * cfg.transmit_power / (layout.len() as f64 * sigma2);
    Ok(0.5 * (1.0 + snr).log2())
}
