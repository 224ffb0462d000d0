//! Joint position/power optimization: linearized subproblems, the
//! safeguarded inner loop, and the outer block-coordinate alternation.
//!
//! The position subproblem is nonconvex through both path loss and two
//! phase terms. Each inner iteration linearizes the per-antenna channel
//! terms around the current layout, maximizes an epigraph variable `z`
//! (the modeled secondary SNR) over a trust-region box, and then accepts
//! the candidate only if the *true* objective improves and the *true* QoS
//! margins stay nonnegative (within tolerance). Rejections halve the trust
//! radius, acceptances double it up to one wavelength. Without the trust
//! region the linearized problem is unbounded along the phase gradient, so
//! step control is not optional here.
//!
//! Two slope modes exist for the linearization of the channel terms:
//! `Paper` keeps only the in-waveguide phase derivative, `Full` applies the
//! complete chain rule (free-space phase, amplitude, and attenuation when
//! enabled). The outer loop alternates the inner position solve with the
//! closed-form power update until the secondary rate settles.

pub mod lp;
pub mod newton;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    effective_channel, free_space_distance, AntennaLayout, EffectiveChannels, ModelError,
    PowerAllocation, SystemConfig, User, UserPair,
};
use crate::power::{optimal_power_split, verify_qos};
use lp::{solve_lp, Constraint, LinearProgram, LpError, RelOp};

pub use newton::{newton_init, NewtonInit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaError {
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("QoS coefficient alpha_p*P - alpha_s*P*gamma_p = {0} must be strictly positive")]
    QosCoefficientNonpositive(f64),
    #[error("lp error: {0}")]
    Lp(#[from] LpError),
}

/// Slope mode for the channel-term linearization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GradientMode {
    /// In-waveguide phase derivative only.
    #[default]
    Paper,
    /// Complete chain rule: free-space phase, amplitude, attenuation.
    Full,
}

/// How the starting layout is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InitScheme {
    /// Newton's method on the path-loss proxy.
    #[default]
    Newton,
    /// First antenna at the midpoint between the users.
    Midpoint,
    /// First antenna at the primary user's position.
    PuFirst,
    /// Static positions centered in the deployment region.
    Fixed,
}

/// Why a loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
    InfeasibleQos,
    TrustRegionCollapse,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub gradient_mode: GradientMode,
    pub init_scheme: InitScheme,
    /// Initial trust radius, meters.
    pub trust_init: f64,
    /// Trust radius cap after acceptance doubling, meters.
    pub trust_cap: f64,
    /// Radius below which the inner loop gives up.
    pub trust_floor: f64,
    /// Absolute objective-change stopping rule shared by both loops.
    pub objective_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Acceptable true-SINR shortfall against gamma_p during acceptance.
    pub qos_margin: f64,
    /// Hard clamp on antenna positions, meters.
    pub position_bounds: Option<(f64, f64)>,
}

impl SolverOptions {
    pub fn for_config(cfg: &SystemConfig) -> Self {
        let lambda = cfg.wavelength();
        SolverOptions {
            gradient_mode: GradientMode::Paper,
            init_scheme: InitScheme::Newton,
            trust_init: lambda / 4.0,
            trust_cap: lambda,
            trust_floor: lambda / 1e4,
            objective_tol: 1e-3,
            max_inner: 200,
            max_outer: 50,
            qos_margin: 1e-6,
            position_bounds: None,
        }
    }
}

/// Expansion-point state: positions plus every cached channel term.
#[derive(Debug, Clone)]
pub struct ScaIterate {
    pub positions: Vec<f64>,
    /// Per user (p, s), per antenna: free-space distance at the expansion point.
    pub dist: [Vec<f64>; 2],
    /// Per user, per antenna: term amplitude including attenuation.
    pub amp: [Vec<f64>; 2],
    /// Per user, per antenna: total phase at the expansion point.
    pub phase: [Vec<f64>; 2],
    /// Per user, per antenna: real/imag term values (t = amp * e^{-j phase}).
    pub t_re: [Vec<f64>; 2],
    pub t_im: [Vec<f64>; 2],
    /// Per user: channel sums g_m = (Re h_m, Im h_m).
    pub h_re: [f64; 2],
    pub h_im: [f64; 2],
    pub trust_radius: f64,
}

impl ScaIterate {
    pub fn new(
        cfg: &SystemConfig,
        users: &UserPair,
        positions: Vec<f64>,
        trust_radius: f64,
    ) -> Result<Self, ModelError> {
        let attenuating = cfg.inwaveguide_attenuation > 0.0;
        if attenuating {
            for &x in &positions {
                if x < cfg.feed_point_x0 - 1e-12 {
                    return Err(ModelError::AntennaBehindFeed { position: x, feed: cfg.feed_point_x0 });
                }
            }
        }
        let sqrt_eta = cfg.eta().sqrt();
        let k_free = 2.0 * std::f64::consts::PI / cfg.wavelength();
        let k_guide = 2.0 * std::f64::consts::PI / cfg.guided_wavelength();
        let d = cfg.waveguide_height_d;
        let n = positions.len();

        let mut it = ScaIterate {
            positions,
            dist: [vec![0.0; n], vec![0.0; n]],
            amp: [vec![0.0; n], vec![0.0; n]],
            phase: [vec![0.0; n], vec![0.0; n]],
            t_re: [vec![0.0; n], vec![0.0; n]],
            t_im: [vec![0.0; n], vec![0.0; n]],
            h_re: [0.0; 2],
            h_im: [0.0; 2],
            trust_radius,
        };
        for (slot, m) in [User::Primary, User::Secondary].into_iter().enumerate() {
            for i in 0..n {
                let x = it.positions[i];
                let dist = free_space_distance(users, m, x, d);
                let phase = k_free * dist + k_guide * (x - cfg.feed_point_x0);
                let mut amp = sqrt_eta / dist;
                if attenuating {
                    amp *= 10f64.powf(-cfg.inwaveguide_attenuation * (x - cfg.feed_point_x0) / 20.0);
                }
                it.dist[slot][i] = dist;
                it.amp[slot][i] = amp;
                it.phase[slot][i] = phase;
                it.t_re[slot][i] = amp * phase.cos();
                it.t_im[slot][i] = -amp * phase.sin();
                it.h_re[slot] += it.t_re[slot][i];
                it.h_im[slot] += it.t_im[slot][i];
            }
        }
        Ok(it)
    }

    pub fn channels(&self) -> EffectiveChannels {
        EffectiveChannels {
            h_p: Complex64::new(self.h_re[0], self.h_im[0]),
            h_s: Complex64::new(self.h_re[1], self.h_im[1]),
        }
    }

    pub fn gain_sq(&self, slot: usize) -> f64 {
        self.h_re[slot] * self.h_re[slot] + self.h_im[slot] * self.h_im[slot]
    }
}

/// Per-antenna slopes d(t_re)/dx, d(t_im)/dx for one user.
pub fn term_slopes(
    cfg: &SystemConfig,
    users: &UserPair,
    it: &ScaIterate,
    slot: usize,
    idx: usize,
    mode: GradientMode,
) -> (f64, f64) {
    let k_guide = 2.0 * std::f64::consts::PI / cfg.guided_wavelength();
    let amp = it.amp[slot][idx];
    let phase = it.phase[slot][idx];
    match mode {
        GradientMode::Paper => (
            -amp * k_guide * phase.sin(),
            -amp * k_guide * phase.cos(),
        ),
        GradientMode::Full => {
            let k_free = 2.0 * std::f64::consts::PI / cfg.wavelength();
            let m = if slot == 0 { User::Primary } else { User::Secondary };
            let dist = it.dist[slot][idx];
            let ddist = (it.positions[idx] - users.x(m)) / dist;
            let dphase = k_free * ddist + k_guide;
            let mut damp = -amp * ddist / dist;
            if cfg.inwaveguide_attenuation > 0.0 {
                damp += amp * (-cfg.inwaveguide_attenuation * std::f64::consts::LN_10 / 20.0);
            }
            (
                damp * phase.cos() - amp * phase.sin() * dphase,
                -(damp * phase.sin() + amp * phase.cos() * dphase),
            )
        }
    }
}

/// The linearized subproblem: an LP over (position deltas, z).
#[derive(Debug, Clone)]
pub struct LinearSubproblem {
    pub lp: LinearProgram,
    /// Set when the secondary-gain cut was replaced by `z <= 0`.
    pub degenerate_cut: bool,
}

/// Objective variants sharing the safeguarded loop.
#[derive(Debug, Clone, Copy)]
enum ObjectiveKind {
    /// Maximize the secondary user's SNR subject to both QoS cuts.
    NomaSecondary { alloc: PowerAllocation },
    /// Maximize one user's gain with full transmit power, no QoS cuts.
    SingleUser { user: User },
}

/// Build the LP of one inner iteration.
///
/// After substituting the affine distance/term/channel updates, every cut
/// is affine in the deltas, so the subproblem has N+1 variables:
/// maximize z subject to the secondary-gain cut, the two QoS cuts, spacing
/// rows, and the trust-region box.
pub fn linearize(
    cfg: &SystemConfig,
    users: &UserPair,
    it: &ScaIterate,
    alloc: &PowerAllocation,
    mode: GradientMode,
    position_bounds: (f64, f64),
) -> Result<LinearSubproblem, ScaError> {
    build_subproblem(cfg, users, it, ObjectiveKind::NomaSecondary { alloc: *alloc }, mode, position_bounds)
}

fn build_subproblem(
    cfg: &SystemConfig,
    users: &UserPair,
    it: &ScaIterate,
    kind: ObjectiveKind,
    mode: GradientMode,
    position_bounds: (f64, f64),
) -> Result<LinearSubproblem, ScaError> {
    let n = it.positions.len();
    let nf = n as f64;
    let p = cfg.transmit_power;
    let nvars = n + 1;
    let zcol = n;
    let mut constraints = Vec::new();
    let mut degenerate_cut = false;

    // Linearized-gain row coefficients for user slot: 2 g_m^k . (dg/dx_n).
    let cut_coeffs = |slot: usize| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let (sre, sim) = term_slopes(cfg, users, it, slot, i, mode);
                2.0 * (it.h_re[slot] * sre + it.h_im[slot] * sim)
            })
            .collect()
    };

    match kind {
        ObjectiveKind::NomaSecondary { alloc } => {
            let rho = alloc.alpha_p * p - alloc.alpha_s * p * cfg.qos_target_gamma_p;
            if rho <= 0.0 {
                return Err(ScaError::QosCoefficientNonpositive(rho));
            }
            // (a) secondary-gain cut tying z to the linearized |h_s|^2.
            let gain_s = it.gain_sq(1);
            if alloc.alpha_s > 0.0 && gain_s > 0.0 {
                let kappa = nf * cfg.noise_power_secondary / (alloc.alpha_s * p);
                let mut row = cut_coeffs(1);
                row.push(-kappa);
                constraints.push(Constraint::new(row, RelOp::Ge, -gain_s));
            } else {
                let mut row = vec![0.0; nvars];
                row[zcol] = 1.0;
                constraints.push(Constraint::new(row, RelOp::Le, 0.0));
                degenerate_cut = true;
            }
            // (b) QoS cuts for both users.
            for (slot, sigma2) in [(0usize, cfg.noise_power_primary), (1usize, cfg.noise_power_secondary)] {
                let rhs_gain = nf * sigma2 * cfg.qos_target_gamma_p / rho;
                let mut row = cut_coeffs(slot);
                row.push(0.0);
                constraints.push(Constraint::new(row, RelOp::Ge, rhs_gain - it.gain_sq(slot)));
            }
        }
        ObjectiveKind::SingleUser { user } => {
            let slot = if user == User::Primary { 0 } else { 1 };
            let sigma2 = match user {
                User::Primary => cfg.noise_power_primary,
                User::Secondary => cfg.noise_power_secondary,
            };
            let gain = it.gain_sq(slot);
            if gain > 0.0 {
                let kappa = nf * sigma2 / p;
                let mut row = cut_coeffs(slot);
                row.push(-kappa);
                constraints.push(Constraint::new(row, RelOp::Ge, -gain));
            } else {
                let mut row = vec![0.0; nvars];
                row[zcol] = 1.0;
                constraints.push(Constraint::new(row, RelOp::Le, 0.0));
                degenerate_cut = true;
            }
        }
    }

    // (f) spacing rows: delta_n - delta_{n-1} >= Delta - current gap.
    for i in 1..n {
        let mut row = vec![0.0; nvars];
        row[i] = 1.0;
        row[i - 1] = -1.0;
        let gap = it.positions[i] - it.positions[i - 1];
        constraints.push(Constraint::new(row, RelOp::Ge, cfg.min_spacing_delta - gap));
    }

    // (g) trust-region box intersected with the position clamp.
    let r = it.trust_radius;
    let (clamp_lo, clamp_hi) = position_bounds;
    let mut bounds: Vec<(Option<f64>, Option<f64>)> = (0..n)
        .map(|i| {
            let lo = (-r).max(clamp_lo - it.positions[i]);
            let hi = r.min(clamp_hi - it.positions[i]);
            (Some(lo), Some(hi))
        })
        .collect();
    bounds.push((None, None)); // z

    let mut objective = vec![0.0; nvars];
    objective[zcol] = 1.0;
    Ok(LinearSubproblem {
        lp: LinearProgram { objective, constraints, bounds },
        degenerate_cut,
    })
}

/// Outcome of one inner position solve.
#[derive(Debug, Clone)]
pub struct ScaOutcome {
    pub layout: AntennaLayout,
    pub inner_iters: usize,
    pub termination: Termination,
    /// True objective (rate) at the returned layout.
    pub objective: f64,
}

fn true_objective(
    cfg: &SystemConfig,
    kind: &ObjectiveKind,
    channels: &EffectiveChannels,
    n: usize,
) -> f64 {
    match kind {
        ObjectiveKind::NomaSecondary { alloc } => {
            (1.0 + crate::model::secondary_snr(cfg, channels.h_s, alloc, n)).log2()
        }
        ObjectiveKind::SingleUser { user } => {
            let sigma2 = match user {
                User::Primary => cfg.noise_power_primary,
                User::Secondary => cfg.noise_power_secondary,
            };
            let snr = channels.gain(*user).norm_sqr() * cfg.transmit_power / (n as f64 * sigma2);
            0.5 * (1.0 + snr).log2()
        }
    }
}

fn predicted_objective(kind: &ObjectiveKind, z: f64) -> f64 {
    let snr = z.max(0.0);
    match kind {
        ObjectiveKind::NomaSecondary { .. } => (1.0 + snr).log2(),
        ObjectiveKind::SingleUser { .. } => 0.5 * (1.0 + snr).log2(),
    }
}

fn qos_acceptable(
    cfg: &SystemConfig,
    kind: &ObjectiveKind,
    channels: &EffectiveChannels,
    n: usize,
    margin: f64,
) -> bool {
    match kind {
        ObjectiveKind::NomaSecondary { alloc } => {
            let g = cfg.qos_target_gamma_p;
            crate::model::primary_sinr(cfg, channels.h_p, alloc, n) >= g - margin
                && crate::model::sic_sinr_at_secondary(cfg, channels.h_s, alloc, n) >= g - margin
        }
        ObjectiveKind::SingleUser { .. } => true,
    }
}

fn sca_core(
    cfg: &SystemConfig,
    users: &UserPair,
    init: &AntennaLayout,
    kind: ObjectiveKind,
    opts: &SolverOptions,
) -> Result<ScaOutcome, ScaError> {
    let n = init.len();
    let bounds = effective_bounds(cfg, users, init, opts);
    let mut iterate = ScaIterate::new(cfg, users, init.positions().to_vec(), opts.trust_init)?;
    let mut current = true_objective(cfg, &kind, &iterate.channels(), n);
    let mut inner_iters = 0usize;
    let mut termination = Termination::MaxIterations;

    while inner_iters < opts.max_inner {
        inner_iters += 1;
        let sub = build_subproblem(cfg, users, &iterate, kind, opts.gradient_mode, bounds)?;
        let sol = match solve_lp(&sub.lp) {
            Ok(s) => s,
            Err(LpError::Infeasible) | Err(LpError::Unbounded) => {
                iterate.trust_radius /= 2.0;
                if iterate.trust_radius < opts.trust_floor {
                    termination = Termination::TrustRegionCollapse;
                    break;
                }
                continue;
            }
            Err(e) => return Err(ScaError::Lp(e)),
        };
        let predicted = predicted_objective(&kind, sol.point[n]);
        if predicted - current < opts.objective_tol {
            termination = Termination::Converged;
            break;
        }
        let candidate: Vec<f64> = iterate
            .positions
            .iter()
            .zip(&sol.point[..n])
            .map(|(x, d)| x + d)
            .collect();
        let accepted = match ScaIterate::new(cfg, users, candidate, iterate.trust_radius) {
            Ok(cand_it) => {
                let ch = cand_it.channels();
                let value = true_objective(cfg, &kind, &ch, n);
                if value > current && qos_acceptable(cfg, &kind, &ch, n, opts.qos_margin) {
                    let improvement = value - current;
                    iterate = cand_it;
                    iterate.trust_radius = (iterate.trust_radius * 2.0).min(opts.trust_cap);
                    current = value;
                    if improvement < opts.objective_tol {
                        termination = Termination::Converged;
                        break;
                    }
                    true
                } else {
                    false
                }
            }
            Err(_) => false,
        };
        if !accepted {
            iterate.trust_radius /= 2.0;
            if iterate.trust_radius < opts.trust_floor {
                termination = Termination::TrustRegionCollapse;
                break;
            }
        }
    }

    let layout = AntennaLayout::new(iterate.positions.clone(), cfg.min_spacing_delta)?;
    Ok(ScaOutcome { layout, inner_iters, termination, objective: current })
}

fn effective_bounds(
    cfg: &SystemConfig,
    users: &UserPair,
    init: &AntennaLayout,
    opts: &SolverOptions,
) -> (f64, f64) {
    let (mut lo, mut hi) = opts.position_bounds.unwrap_or_else(|| {
        let xmin = users.x_p.min(users.x_s);
        let xmax = users.x_p.max(users.x_s);
        (xmin - cfg.region_side_d, xmax + cfg.region_side_d)
    });
    if cfg.inwaveguide_attenuation > 0.0 {
        lo = lo.max(cfg.feed_point_x0);
    }
    // The clamp must contain the starting layout.
    let first = init.positions()[0];
    let last = *init.positions().last().expect("layout is never empty");
    lo = lo.min(first);
    hi = hi.max(last);
    (lo, hi)
}

/// Inner position solve for a fixed power allocation.
pub fn sca_solve(
    cfg: &SystemConfig,
    users: &UserPair,
    init: &AntennaLayout,
    alloc: &PowerAllocation,
    opts: &SolverOptions,
) -> Result<ScaOutcome, ScaError> {
    sca_core(cfg, users, init, ObjectiveKind::NomaSecondary { alloc: *alloc }, opts)
}

/// Single-user gain maximization (used by the OMA baseline).
pub fn maximize_user_gain(
    cfg: &SystemConfig,
    users: &UserPair,
    user: User,
    n: usize,
    opts: &SolverOptions,
) -> Result<ScaOutcome, ScaError> {
    let d = cfg.waveguide_height_d;
    let target = newton::Target { x: users.x(user), c: users.c_const(user, d) };
    let span = (users.x(user) - cfg.region_side_d, users.x(user) + cfg.region_side_d);
    let init = newton::init_targets(&[target], cfg.min_spacing_delta, n, span);
    sca_core(cfg, users, &init.layout, ObjectiveKind::SingleUser { user }, opts)
}

/// Full solve report of the outer alternation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub layout: AntennaLayout,
    pub alloc: PowerAllocation,
    pub rate_p: f64,
    pub rate_s: f64,
    /// Secondary rate after initialization and after every outer iteration.
    pub rate_trace: Vec<f64>,
    /// Inner iteration count per outer iteration.
    pub inner_iters: Vec<usize>,
    /// Inner termination reason per outer iteration.
    pub inner_terminations: Vec<Termination>,
    pub termination: Termination,
    /// True when the Newton initialization fell back to the midpoint.
    pub newton_fallback: bool,
    pub infeasible_qos: bool,
}

impl SolveReport {
    pub fn outer_iters(&self) -> usize {
        self.inner_iters.len()
    }
}

fn initial_layout(cfg: &SystemConfig, users: &UserPair, n: usize, opts: &SolverOptions) -> NewtonInit {
    match opts.init_scheme {
        InitScheme::Newton => newton_init(cfg, users, n),
        InitScheme::Midpoint => NewtonInit {
            layout: AntennaLayout::equally_spaced((users.x_p + users.x_s) / 2.0, cfg.min_spacing_delta, n),
            fallback: false,
            iterations: 0,
        },
        InitScheme::PuFirst => NewtonInit {
            layout: AntennaLayout::equally_spaced(users.x_p, cfg.min_spacing_delta, n),
            fallback: false,
            iterations: 0,
        },
        InitScheme::Fixed => {
            let x1 = cfg.region_side_d / 2.0 - (n - 1) as f64 * cfg.min_spacing_delta / 2.0;
            NewtonInit {
                layout: AntennaLayout::equally_spaced(x1, cfg.min_spacing_delta, n),
                fallback: false,
                iterations: 0,
            }
        }
    }
}

/// Outer loop: alternate the inner position solve with the closed-form
/// power update until the secondary rate settles.
pub fn bcd_solve(
    cfg: &SystemConfig,
    users: &UserPair,
    n: usize,
    opts: &SolverOptions,
) -> Result<SolveReport, ScaError> {
    let init = initial_layout(cfg, users, n, opts);
    let mut layout = init.layout.clone();
    let channels = effective_channel(cfg, users, &layout)?;
    let mut power = optimal_power_split(cfg, &channels, n);
    if power.infeasible_qos {
        let (rate_p, rate_s) = crate::model::noma_rates(cfg, &channels, &power.alloc, n);
        return Ok(SolveReport {
            layout,
            alloc: power.alloc,
            rate_p,
            rate_s,
            rate_trace: vec![0.0],
            inner_iters: vec![],
            inner_terminations: vec![],
            termination: Termination::InfeasibleQos,
            newton_fallback: init.fallback,
            infeasible_qos: true,
        });
    }

    let mut channels = channels;
    let mut rate = (1.0 + crate::model::secondary_snr(cfg, channels.h_s, &power.alloc, n)).log2();
    let mut rate_trace = vec![rate];
    let mut inner_iters = Vec::new();
    let mut inner_terminations = Vec::new();
    let mut termination = Termination::MaxIterations;

    for _ in 0..opts.max_outer {
        let outcome = sca_core(cfg, users, &layout, ObjectiveKind::NomaSecondary { alloc: power.alloc }, opts)?;
        layout = outcome.layout;
        inner_iters.push(outcome.inner_iters);
        inner_terminations.push(outcome.termination);
        channels = effective_channel(cfg, users, &layout)?;

        // Power update for the new positions; never let it reduce the rate
        // (it can shave off rounding-level slack otherwise).
        let updated = optimal_power_split(cfg, &channels, n);
        let updated_rate =
            (1.0 + crate::model::secondary_snr(cfg, channels.h_s, &updated.alloc, n)).log2();
        let sca_rate = outcome.objective;
        let new_rate = if updated.infeasible_qos || updated_rate < sca_rate {
            sca_rate
        } else {
            power = updated;
            updated_rate
        };

        let delta = new_rate - rate;
        rate = new_rate;
        rate_trace.push(rate);
        if delta.abs() < opts.objective_tol {
            termination = Termination::Converged;
            break;
        }
    }

    let (rate_p, rate_s) = crate::model::noma_rates(cfg, &channels, &power.alloc, n);
    let qos = verify_qos(cfg, &channels, &power.alloc, n);
    Ok(SolveReport {
        layout,
        alloc: power.alloc,
        rate_p,
        rate_s,
        rate_trace,
        inner_iters,
        inner_terminations,
        termination,
        newton_fallback: init.fallback,
        infeasible_qos: !qos.both() && {
            // Distinguish rounding slack from genuine infeasibility.
            let g = cfg.qos_target_gamma_p;
            crate::model::primary_sinr(cfg, channels.h_p, &power.alloc, n) < g - opts.qos_margin
                || crate::model::sic_sinr_at_secondary(cfg, channels.h_s, &power.alloc, n) < g - opts.qos_margin
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dbm_to_watts;

    fn cfg28(p_dbm: f64, gamma: f64) -> SystemConfig {
        SystemConfig::defaults(28e9, dbm_to_watts(p_dbm), gamma, 5.0)
    }

    #[test]
    fn iterate_caches_match_channel_model() {
        let cfg = cfg28(30.0, 0.1);
        let users = UserPair::new(0.7, 1.1, 4.1, 2.3);
        let layout = AntennaLayout::equally_spaced(1.5, cfg.min_spacing_delta, 5);
        let it = ScaIterate::new(&cfg, &users, layout.positions().to_vec(), 0.001).unwrap();
        let ch = effective_channel(&cfg, &users, &layout).unwrap();
        assert!((it.h_re[0] - ch.h_p.re).abs() <= 1e-10 * ch.h_p.re.abs().max(1e-12));
        assert!((it.h_im[0] - ch.h_p.im).abs() <= 1e-10 * ch.h_p.im.abs().max(1e-12));
        assert!((it.h_re[1] - ch.h_s.re).abs() <= 1e-10 * ch.h_s.re.abs().max(1e-12));
        assert!((it.h_im[1] - ch.h_s.im).abs() <= 1e-10 * ch.h_s.im.abs().max(1e-12));
    }

    #[test]
    fn paper_slopes_match_modeled_finite_difference() {
        // The modeled function freezes the amplitude and the free-space
        // phase, leaving only the in-waveguide phase term varying.
        let cfg = cfg28(30.0, 0.1);
        let users = UserPair::new(1.0, 0.8, 3.8, 1.9);
        let it = ScaIterate::new(&cfg, &users, vec![1.4, 1.8, 2.2], 0.001).unwrap();
        let k_guide = 2.0 * std::f64::consts::PI / cfg.guided_wavelength();
        let h = 1e-7;
        for slot in 0..2 {
            for i in 0..3 {
                let (sre, sim) = term_slopes(&cfg, &users, &it, slot, i, GradientMode::Paper);
                let amp = it.amp[slot][i];
                let ph0 = it.phase[slot][i];
                let model_re = |dx: f64| amp * (ph0 + k_guide * dx).cos();
                let model_im = |dx: f64| -amp * (ph0 + k_guide * dx).sin();
                let fd_re = (model_re(h) - model_re(-h)) / (2.0 * h);
                let fd_im = (model_im(h) - model_im(-h)) / (2.0 * h);
                assert!((sre - fd_re).abs() <= 1e-6 * sre.abs().max(1e-9), "re slot {slot} ant {i}");
                assert!((sim - fd_im).abs() <= 1e-6 * sim.abs().max(1e-9), "im slot {slot} ant {i}");
            }
        }
    }

    #[test]
    fn full_slopes_match_exact_finite_difference() {
        let mut cfg = cfg28(30.0, 0.1);
        cfg.inwaveguide_attenuation = 0.08;
        let users = UserPair::new(1.0, 0.8, 3.8, 1.9);
        let positions = vec![1.4, 1.8, 2.2];
        let it = ScaIterate::new(&cfg, &users, positions.clone(), 0.001).unwrap();
        let h = 1e-7;
        for slot in 0..2 {
            let m = if slot == 0 { User::Primary } else { User::Secondary };
            for i in 0..3 {
                let (sre, sim) = term_slopes(&cfg, &users, &it, slot, i, GradientMode::Full);
                let term = |x: f64| {
                    let dist = free_space_distance(&users, m, x, cfg.waveguide_height_d);
                    let phase = 2.0 * std::f64::consts::PI / cfg.wavelength() * dist
                        + 2.0 * std::f64::consts::PI / cfg.guided_wavelength() * (x - cfg.feed_point_x0);
                    let amp = cfg.eta().sqrt() / dist
                        * 10f64.powf(-cfg.inwaveguide_attenuation * (x - cfg.feed_point_x0) / 20.0);
                    (amp * phase.cos(), -amp * phase.sin())
                };
                let x0 = positions[i];
                let (re_p, im_p) = term(x0 + h);
                let (re_m, im_m) = term(x0 - h);
                let fd_re = (re_p - re_m) / (2.0 * h);
                let fd_im = (im_p - im_m) / (2.0 * h);
                assert!((sre - fd_re).abs() <= 1e-6 * fd_re.abs().max(1e-9), "re slot {slot} ant {i}");
                assert!((sim - fd_im).abs() <= 1e-6 * fd_im.abs().max(1e-9), "im slot {slot} ant {i}");
            }
        }
    }

    #[test]
    fn zero_trust_radius_pins_z_to_expansion_value() {
        let cfg = cfg28(30.0, 0.1);
        let users = UserPair::new(0.9, 1.0, 4.0, 2.0);
        let alloc = PowerAllocation::from_secondary(0.6).unwrap();
        let it = ScaIterate::new(&cfg, &users, vec![2.0, 2.4], 1e-15).unwrap();
        let sub = linearize(&cfg, &users, &it, &alloc, GradientMode::Paper, (-10.0, 10.0)).unwrap();
        let sol = solve_lp(&sub.lp).unwrap();
        let n = 2;
        let z_expected = alloc.alpha_s * cfg.transmit_power * it.gain_sq(1)
            / (n as f64 * cfg.noise_power_secondary);
        assert!(
            (sol.point[n] - z_expected).abs() <= 1e-6 * z_expected,
            "z = {} vs {z_expected}",
            sol.point[n]
        );
    }

    #[test]
    fn lp_optimum_never_below_expansion_value() {
        // The zero-delta point is feasible, so the LP value dominates z^k.
        let cfg = cfg28(30.0, 0.5);
        let users = UserPair::new(0.5, 0.5, 4.5, 2.5);
        let channels_alloc = PowerAllocation::from_secondary(0.4).unwrap();
        let it = ScaIterate::new(&cfg, &users, vec![1.0, 1.6], cfg.wavelength() / 4.0).unwrap();
        let sub = linearize(&cfg, &users, &it, &channels_alloc, GradientMode::Paper, (-10.0, 10.0)).unwrap();
        let sol = solve_lp(&sub.lp).unwrap();
        let z_k = channels_alloc.alpha_s * cfg.transmit_power * it.gain_sq(1)
            / (2.0 * cfg.noise_power_secondary);
        assert!(sol.point[2] >= z_k * (1.0 - 1e-9), "z {} vs z_k {z_k}", sol.point[2]);
    }

    #[test]
    fn qos_coefficient_contract_enforced() {
        let cfg = cfg28(30.0, 2.0);
        let users = UserPair::new(1.0, 1.0, 3.0, 1.0);
        // alpha_s large enough that alpha_p - alpha_s*gamma < 0.
        let alloc = PowerAllocation::from_secondary(0.9).unwrap();
        let it = ScaIterate::new(&cfg, &users, vec![2.0], 0.001).unwrap();
        let err = linearize(&cfg, &users, &it, &alloc, GradientMode::Paper, (-10.0, 10.0));
        assert!(matches!(err, Err(ScaError::QosCoefficientNonpositive(_))));
    }

    #[test]
    fn sca_respects_spacing_on_all_iterates() {
        let cfg = cfg28(30.0, 0.1);
        let users = UserPair::new(0.5, 1.5, 4.5, 0.5);
        let init = newton_init(&cfg, &users, 4).layout;
        let channels = effective_channel(&cfg, &users, &init).unwrap();
        let alloc = optimal_power_split(&cfg, &channels, 4).alloc;
        let opts = SolverOptions::for_config(&cfg);
        let out = sca_solve(&cfg, &users, &init, &alloc, &opts).unwrap();
        // Final layout validates by construction; also check raw gaps.
        for w in out.layout.positions().windows(2) {
            assert!(w[1] - w[0] >= cfg.min_spacing_delta - 1e-9);
        }
    }

    #[test]
    fn bcd_trace_is_nondecreasing_and_converges() {
        let cfg = cfg28(30.0, 0.1);
        let users = UserPair::new(1.2, 0.4, 3.6, 2.2);
        let opts = SolverOptions::for_config(&cfg);
        let report = bcd_solve(&cfg, &users, 2, &opts).unwrap();
        assert!(matches!(report.termination, Termination::Converged | Termination::MaxIterations));
        for w in report.rate_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "trace decreased: {:?}", report.rate_trace);
        }
        assert!(report.rate_s > 0.0);
        assert!(!report.infeasible_qos);
    }

    #[test]
    fn bcd_final_solution_meets_qos() {
        let cfg = cfg28(25.0, 0.5);
        let users = UserPair::new(0.3, 2.1, 4.7, 0.9);
        let opts = SolverOptions::for_config(&cfg);
        let report = bcd_solve(&cfg, &users, 3, &opts).unwrap();
        let channels = effective_channel(&cfg, &users, &report.layout).unwrap();
        let g = cfg.qos_target_gamma_p;
        assert!(crate::model::primary_sinr(&cfg, channels.h_p, &report.alloc, 3) >= g - 1e-6);
        assert!(crate::model::sic_sinr_at_secondary(&cfg, channels.h_s, &report.alloc, 3) >= g - 1e-6);
    }

    #[test]
    fn converges_quickly_from_a_local_optimum() {
        // Run bcd once, then restart from its final layout: the inner loop
        // should accept no step and stop almost immediately.
        let cfg = cfg28(30.0, 0.1);
        let users = UserPair::new(1.0, 1.0, 4.0, 1.0);
        let opts = SolverOptions::for_config(&cfg);
        let report = bcd_solve(&cfg, &users, 2, &opts).unwrap();
        let out = sca_solve(&cfg, &users, &report.layout, &report.alloc, &opts).unwrap();
        assert!(out.inner_iters <= 2, "took {} iterations", out.inner_iters);
        assert_eq!(out.layout.positions(), report.layout.positions());
    }

    #[test]
    fn infeasible_qos_reported() {
        // Absurd QoS target at modest power: no allocation can satisfy it.
        let cfg = cfg28(-40.0, 1e6);
        let users = UserPair::new(1.0, 2.0, 4.0, 2.0);
        let opts = SolverOptions::for_config(&cfg);
        let report = bcd_solve(&cfg, &users, 2, &opts).unwrap();
        assert_eq!(report.termination, Termination::InfeasibleQos);
        assert!(report.infeasible_qos);
        assert_eq!(report.alloc.alpha_s, 0.0);
    }

    #[test]
    fn full_variable_lp_matches_eliminated_lp() {
        // Rebuild the subproblem keeping d, t, h as explicit variables tied
        // by equality rows; the optimum must match the eliminated LP.
        let cfg = cfg28(30.0, 0.3);
        let users = UserPair::new(0.8, 1.2, 4.2, 1.7);
        for n in [1usize, 2, 3] {
            let init = newton_init(&cfg, &users, n).layout;
            let channels = effective_channel(&cfg, &users, &init).unwrap();
            let split = optimal_power_split(&cfg, &channels, n);
            assert!(split.cap_a > 0.0);
            let alloc = split.alloc;
            let it = ScaIterate::new(&cfg, &users, init.positions().to_vec(), cfg.wavelength() / 4.0).unwrap();
            let sub = linearize(&cfg, &users, &it, &alloc, GradientMode::Paper, (-20.0, 20.0)).unwrap();
            let lean = solve_lp(&sub.lp).unwrap();

            let full = build_full_variable_lp(&cfg, &users, &it, &alloc, (-20.0, 20.0));
            let fat = solve_lp(&full).unwrap();
            let zl = lean.point[n];
            let zf = fat.point[fat.point.len() - 1];
            assert!(
                (zl - zf).abs() <= 1e-6 * zl.abs().max(1.0),
                "n = {n}: eliminated z = {zl}, full z = {zf}"
            );
        }
    }

    /// Full-variable form of the subproblem: variables
    /// [delta_0..delta_{n-1}, tR_{m,i}, tI_{m,i} (m=0,1), hR_m, hI_m, z].
    fn build_full_variable_lp(
        cfg: &SystemConfig,
        users: &UserPair,
        it: &ScaIterate,
        alloc: &PowerAllocation,
        clamp: (f64, f64),
    ) -> LinearProgram {
        let n = it.positions.len();
        let nf = n as f64;
        let p = cfg.transmit_power;
        // Layout: deltas [0..n), tR/tI for (slot, i) at base + 2*(slot*n+i),
        // then hR_p, hI_p, hR_s, hI_s, then z.
        let t_base = n;
        let h_base = t_base + 4 * n;
        let zcol = h_base + 4;
        let nvars = zcol + 1;
        let t_col = |slot: usize, i: usize, im: bool| t_base + 2 * (slot * n + i) + im as usize;
        let h_col = |slot: usize, im: bool| h_base + 2 * slot + im as usize;

        let mut rows = Vec::new();
        // t equality rows: t = t^k + slope * delta.
        for slot in 0..2 {
            for i in 0..n {
                let (sre, sim) = term_slopes(cfg, users, it, slot, i, GradientMode::Paper);
                let mut row = vec![0.0; nvars];
                row[t_col(slot, i, false)] = 1.0;
                row[i] = -sre;
                rows.push(Constraint::new(row, RelOp::Eq, it.t_re[slot][i]));
                let mut row = vec![0.0; nvars];
                row[t_col(slot, i, true)] = 1.0;
                row[i] = -sim;
                rows.push(Constraint::new(row, RelOp::Eq, it.t_im[slot][i]));
            }
        }
        // h = sum of t.
        for slot in 0..2 {
            for im in [false, true] {
                let mut row = vec![0.0; nvars];
                row[h_col(slot, im)] = 1.0;
                for i in 0..n {
                    row[t_col(slot, i, im)] = -1.0;
                }
                rows.push(Constraint::new(row, RelOp::Eq, 0.0));
            }
        }
        //

        // Linearized-gain cuts on h.
        let rho = alloc.alpha_p * p - alloc.alpha_s * p * cfg.qos_target_gamma_p;
        let kappa = nf * cfg.noise_power_secondary / (alloc.alpha_s * p);
        let mut row = vec![0.0; nvars];
        row[h_col(1, false)] = 2.0 * it.h_re[1];
        row[h_col(1, true)] = 2.0 * it.h_im[1];
        row[zcol] = -kappa;
        rows.push(Constraint::new(row, RelOp::Ge, it.gain_sq(1)));
        for (slot, sigma2) in [(0usize, cfg.noise_power_primary), (1usize, cfg.noise_power_secondary)] {
            let mut row = vec![0.0; nvars];
            row[h_col(slot, false)] = 2.0 * it.h_re[slot];
            row[h_col(slot, true)] = 2.0 * it.h_im[slot];
            let rhs = nf * sigma2 * cfg.qos_target_gamma_p / rho + it.gain_sq(slot);
            rows.push(Constraint::new(row, RelOp::Ge, rhs));
        }
        // Spacing.
        for i in 1..n {
            let mut row = vec![0.0; nvars];
            row[i] = 1.0;
            row[i - 1] = -1.0;
            let gap = it.positions[i] - it.positions[i - 1];
            rows.push(Constraint::new(row, RelOp::Ge, cfg.min_spacing_delta - gap));
        }
        let mut bounds: Vec<(Option<f64>, Option<f64>)> = (0..n)
            .map(|i| {
                let r = it.trust_radius;
                let lo = (-r).max(clamp.0 - it.positions[i]);
                let hi = r.min(clamp.1 - it.positions[i]);
                (Some(lo), Some(hi))
            })
            .collect();
        bounds.extend(std::iter::repeat((None, None)).take(nvars - n));
        let mut objective = vec![0.0; nvars];
        objective[zcol] = 1.0;
        LinearProgram { objective, constraints: rows, bounds }
    }
}
