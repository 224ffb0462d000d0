//! Globally optimal single-antenna (N = 1) solution.
//!
//! With one antenna the channel gain is pure path loss, `|h_m|^2 =
//! eta/((x - x_m)^2 + C_m)`, and both QoS constraints take the form
//!
//! ```text
//! sigma_m^2 ((x - x_m)^2 + C_m) <= W(alpha_p),
//! W(a) = P eta (a (1 + gamma_p) - gamma_p) / gamma_p,
//! ```
//!
//! so each constraint is a disc around one user whose radius grows with the
//! primary power share. The optimum always lies between the users and is
//! one of finitely many candidates:
//!
//! * both constraints tight (the discs touch a common point),
//! * the primary constraint tight with the antenna sliding toward the
//!   secondary user (a stationary point of a quadratic),
//! * the antenna pinned at one user's position with the minimal feasible
//!   power share.
//!
//! Every candidate is closed-form; the solver evaluates the true secondary
//! rate of each feasible candidate and returns the best. Degenerate
//! instances where `P eta` only just reaches the feasibility threshold get
//! all power assigned to the primary user and a zero secondary rate.

use serde::{Deserialize, Serialize};

use crate::model::{SystemConfig, User, UserPair};

/// Relative tolerance for detecting the boundary-feasibility cases.
pub const BOUNDARY_REL_TOL: f64 = 1e-9;
/// Agreement required between the two algebraic position expressions in the
/// both-constraints-tight case, meters.
pub const POSITION_AGREEMENT_TOL: f64 = 1e-6;

/// Which structural case produced the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseId {
    /// P eta = C_p sigma_p^2 gamma_p (within tolerance): all power to the
    /// primary, antenna at the primary user, zero secondary rate.
    BoundaryPrimary,
    /// Same boundary with the secondary user binding.
    BoundarySecondary,
    /// Both QoS constraints tight at an interior position.
    Interior,
    /// Primary constraint tight, secondary slack (antenna pulled toward the
    /// secondary user as far as the primary QoS disc allows).
    PrimaryTight,
    /// Secondary constraint tight, primary slack (antenna at the secondary
    /// user with the minimal power share).
    SecondaryTight,
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleAntennaSolution {
    pub x_star: f64,
    pub alpha_p_star: f64,
    pub alpha_s_star: f64,
    pub case_id: CaseId,
    /// Disc radii sqrt((x - x_m)^2) of the tight constraints; present for
    /// the interior case where both are defined.
    pub beta_p: Option<f64>,
    pub beta_s: Option<f64>,
    pub secondary_rate: f64,
}

impl SingleAntennaSolution {
    fn infeasible() -> Self {
        SingleAntennaSolution {
            x_star: f64::NAN,
            alpha_p_star: 1.0,
            alpha_s_star: 0.0,
            case_id: CaseId::Infeasible,
            beta_p: None,
            beta_s: None,
            secondary_rate: 0.0,
        }
    }
}

/// Feasibility of the single-antenna problem:
/// `P eta >= max(C_p sigma_p^2, C_s sigma_s^2) * gamma_p`.
pub fn feasible_n1(cfg: &SystemConfig, users: &UserPair) -> bool {
    let d = cfg.waveguide_height_d;
    let c_p = users.c_const(User::Primary, d);
    let c_s = users.c_const(User::Secondary, d);
    let need = (c_p * cfg.noise_power_primary).max(c_s * cfg.noise_power_secondary)
        * cfg.qos_target_gamma_p;
    cfg.transmit_power * cfg.eta() >= need
}

struct Instance {
    peta: f64,
    gamma: f64,
    sp2: f64,
    ss2: f64,
    x_p: f64,
    x_s: f64,
    c_p: f64,
    c_s: f64,
}

impl Instance {
    fn new(cfg: &SystemConfig, users: &UserPair) -> Self {
        let d = cfg.waveguide_height_d;
        Instance {
            peta: cfg.transmit_power * cfg.eta(),
            gamma: cfg.qos_target_gamma_p,
            sp2: cfg.noise_power_primary,
            ss2: cfg.noise_power_secondary,
            x_p: users.x_p,
            x_s: users.x_s,
            c_p: users.c_const(User::Primary, d),
            c_s: users.c_const(User::Secondary, d),
        }
    }

    /// QoS budget W at a power share alpha_p.
    fn w_of_alpha(&self, alpha_p: f64) -> f64 {
        self.peta * (alpha_p * (1.0 + self.gamma) - self.gamma) / self.gamma
    }

    /// Power share alpha_p achieving QoS budget W.
    fn alpha_of_w(&self, w: f64) -> f64 {
        (w + self.peta) * self.gamma / (self.peta * (1.0 + self.gamma))
    }

    fn rate(&self, x: f64, alpha_p: f64) -> f64 {
        let ds2 = (x - self.x_s).powi(2) + self.c_s;
        (1.0 + (1.0 - alpha_p) * self.peta / (ds2 * self.ss2)).log2()
    }

    /// Signed slack of each QoS disc at (x, alpha_p); nonnegative = satisfied.
    fn slacks(&self, x: f64, alpha_p: f64) -> (f64, f64) {
        let w = self.w_of_alpha(alpha_p);
        (
            w - self.sp2 * ((x - self.x_p).powi(2) + self.c_p),
            w - self.ss2 * ((x - self.x_s).powi(2) + self.c_s),
        )
    }
}

/// Closed-form global optimum for N = 1.
pub fn solve_n1(cfg: &SystemConfig, users: &UserPair) -> SingleAntennaSolution {
    let inst = Instance::new(cfg, users);
    let need_p = inst.c_p * inst.sp2 * inst.gamma;
    let need_s = inst.c_s * inst.ss2 * inst.gamma;
    let need = need_p.max(need_s);

    if inst.peta < need * (1.0 - BOUNDARY_REL_TOL) {
        return SingleAntennaSolution::infeasible();
    }
    if (inst.peta - need).abs() <= BOUNDARY_REL_TOL * need {
        // All power to the primary; the binding user hosts the antenna and
        // the secondary rate is zero. The other user's constraint must also
        // hold at that point, otherwise the instance is infeasible despite
        // the threshold test (possible only at extreme geometry).
        let (x, case) = if need_p >= need_s {
            (inst.x_p, CaseId::BoundaryPrimary)
        } else {
            (inst.x_s, CaseId::BoundarySecondary)
        };
        let (sl_p, sl_s) = inst.slacks(x, 1.0);
        let scale = inst.w_of_alpha(1.0).abs().max(1e-300);
        if sl_p < -1e-9 * scale || sl_s < -1e-9 * scale {
            return SingleAntennaSolution::infeasible();
        }
        return SingleAntennaSolution {
            x_star: x,
            alpha_p_star: 1.0,
            alpha_s_star: 0.0,
            case_id: case,
            beta_p: None,
            beta_s: None,
            secondary_rate: 0.0,
        };
    }

    // Candidate positions between the users (the objective and both
    // constraints only improve by clamping into this interval).
    let lo = inst.x_p.min(inst.x_s);
    let hi = inst.x_p.max(inst.x_s);
    let length = hi - lo;
    let toward_s = if inst.x_s >= inst.x_p { 1.0 } else { -1.0 };

    let mut candidates: Vec<f64> = Vec::with_capacity(6);
    // Both constraints tight: sp2((x-x_p)^2 + C_p) = ss2((x-x_s)^2 + C_s).
    {
        let a2 = inst.sp2 - inst.ss2;
        let b1 = -2.0 * (inst.sp2 * inst.x_p - inst.ss2 * inst.x_s);
        let c0 = inst.sp2 * (inst.x_p * inst.x_p + inst.c_p)
            - inst.ss2 * (inst.x_s * inst.x_s + inst.c_s);
        if a2.abs() <= 1e-12 * inst.sp2.max(inst.ss2) {
            if b1 != 0.0 {
                candidates.push(-c0 / b1);
            }
        } else {
            let disc = b1 * b1 - 4.0 * a2 * c0;
            if disc >= 0.0 {
                let r = disc.sqrt();
                candidates.push((-b1 + r) / (2.0 * a2));
                candidates.push((-b1 - r) / (2.0 * a2));
            }
        }
    }
    // Primary tight, secondary slack: stationary points of the rate along
    // the sliding path x = x_p + toward_s * beta. The first-order condition
    // reduces to L b^2 - (L^2 + C_s + G) b + G L = 0 with
    // G = (P eta / gamma - C_p sigma_p^2) / sigma_p^2.
    if length > 0.0 {
        let g_cap = (inst.peta / inst.gamma - inst.c_p * inst.sp2) / inst.sp2;
        let s = length * length + inst.c_s + g_cap;
        let disc = s * s - 4.0 * g_cap * length * length;
        if disc >= 0.0 {
            let r = disc.sqrt();
            for beta in [(s - r) / (2.0 * length), (s + r) / (2.0 * length)] {
                if (-1e-12..=length + 1e-12).contains(&beta) {
                    candidates.push(inst.x_p + toward_s * beta);
                }
            }
        }
    }
    // Endpoints of the sliding path.
    candidates.push(inst.x_s);
    candidates.push(inst.x_p);

    let mut best: Option<(f64, f64, f64)> = None; // (rate, x, alpha_p)
    for x in candidates {
        if !x.is_finite() || x < lo - 1e-9 || x > hi + 1e-9 {
            continue;
        }
        let x = x.clamp(lo, hi);
        // Minimal power share making x feasible.
        let w = (inst.sp2 * ((x - inst.x_p).powi(2) + inst.c_p))
            .max(inst.ss2 * ((x - inst.x_s).powi(2) + inst.c_s));
        let alpha_p = inst.alpha_of_w(w);
        if alpha_p > 1.0 + 1e-12 {
            continue;
        }
        let alpha_p = alpha_p.min(1.0);
        let (sl_p, sl_s) = inst.slacks(x, alpha_p);
        let tol = 1e-9 * w.abs().max(1e-300);
        if sl_p < -tol || sl_s < -tol {
            continue;
        }
        let rate = inst.rate(x, alpha_p);
        if best.map_or(true, |(r, _, _)| rate > r) {
            best = Some((rate, x, alpha_p));
        }
    }

    let Some((rate, x, alpha_p)) = best else {
        // No candidate reachable with alpha_p <= 1: the threshold test was
        // met but no single position satisfies both discs at full primary
        // power (extreme geometry only).
        return SingleAntennaSolution::infeasible();
    };

    // Classify by constraint tightness at the winner.
    let w = inst.w_of_alpha(alpha_p);
    let (sl_p, sl_s) = inst.slacks(x, alpha_p);
    let tight = |s: f64| s.abs() <= 1e-8 * w.abs().max(1e-300);
    let case_id = match (tight(sl_p), tight(sl_s)) {
        (true, true) => CaseId::Interior,
        (true, false) => CaseId::PrimaryTight,
        (false, true) => CaseId::SecondaryTight,
        // The minimal-W construction always leaves one constraint tight.
        (false, false) => CaseId::Interior,
    };

    let radicand = |c: f64, s2: f64| (w / s2 - c).max(0.0);
    let beta_p = radicand(inst.c_p, inst.sp2).sqrt();
    let beta_s = radicand(inst.c_s, inst.ss2).sqrt();

    let x_star = if case_id == CaseId::Interior {
        // The two tight-disc expressions describe the same point; average
        // them to halve rounding error, after checking they agree.
        let from_p = inst.x_p + toward_s * beta_p;
        let from_s = inst.x_s - toward_s * beta_s;
        debug_assert!(
            (from_p - from_s).abs() <= POSITION_AGREEMENT_TOL,
            "tight-disc expressions disagree: {from_p} vs {from_s}"
        );
        0.5 * (from_p + from_s)
    } else {
        x
    };

    SingleAntennaSolution {
        x_star,
        alpha_p_star: alpha_p,
        alpha_s_star: 1.0 - alpha_p,
        case_id,
        beta_p: (case_id == CaseId::Interior).then_some(beta_p),
        beta_s: (case_id == CaseId::Interior).then_some(beta_s),
        secondary_rate: inst.rate(x_star, alpha_p),
    }
}

/// Signed slacks of the two QoS constraints at an interior solution, in the
/// affine form `(P eta + P eta gamma) alpha_p - (x - x_m)^2 sigma_m^2 gamma
/// - P eta gamma - C_m sigma_m^2 gamma`.
///
/// Callers must pass an interior-case solution.
pub fn check_tightness(
    cfg: &SystemConfig,
    users: &UserPair,
    sol: &SingleAntennaSolution,
) -> Result<(f64, f64), &'static str> {
    if sol.case_id != CaseId::Interior {
        return Err("tightness check applies to interior-case solutions only");
    }
    let inst = Instance::new(cfg, users);
    let (sl_p, sl_s) = inst.slacks(sol.x_star, sol.alpha_p_star);
    // Convert from W-units to the constraint scale of the affine form.
    Ok((sl_p * inst.gamma, sl_s * inst.gamma))
}

/// Natural scale of the tightness slacks (the leading constraint term).
pub fn tightness_scale(cfg: &SystemConfig, sol: &SingleAntennaSolution) -> f64 {
    cfg.transmit_power * cfg.eta() * (1.0 + cfg.qos_target_gamma_p) * sol.alpha_p_star
}
