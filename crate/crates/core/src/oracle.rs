//! Brute-force references: exhaustive position grids and 1-D power scans.
//!
//! These are the independent oracles the solvers are audited against. The
//! N = 1 search walks a full grid between the users. The N = 2 search is a
//! coarse-to-fine two-pass scheme by default (coarse step lambda/2, then a
//! lambda/50 refinement around the best coarse cells); the exact single-pass
//! grid remains available behind a flag for small spans. Every grid point is
//! evaluated with the closed-form power split, so the returned point is the
//! global optimum up to grid resolution.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    effective_channel, noma_rates, AntennaLayout, Solution, SystemConfig, User, UserPair,
};
use crate::power::{optimal_power_split, verify_qos, PowerUpdateResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("exhaustive search supports N in {{1, 2}}, got {0}")]
    UnsupportedAntennaCount(usize),
    #[error("grid of {points} evaluations exceeds the budget of {budget}")]
    BudgetExceeded { points: u64, budget: u64 },
    #[error("no grid point satisfies both QoS constraints")]
    NoFeasiblePoint,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Grid description for the exhaustive search.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    /// Grid step, meters (the usual choice is lambda/50).
    pub step: f64,
    /// Number of antennas (grid dimensions).
    pub dimensions: usize,
    /// Maximum number of point evaluations permitted.
    pub budget: u64,
    /// Use the exact single-pass grid for N = 2 instead of coarse-to-fine.
    pub exact: bool,
}

impl GridSpec {
    /// Default grid for an instance: step lambda/50, span per the
    /// single-antenna location bound (between the users) widened by
    /// N*Delta on both sides for N = 2.
    pub fn for_instance(cfg: &SystemConfig, users: &UserPair, n: usize) -> Self {
        let lo = users.x_p.min(users.x_s);
        let hi = users.x_p.max(users.x_s);
        let pad = if n > 1 { n as f64 * cfg.min_spacing_delta } else { 0.0 };
        GridSpec {
            lower: lo - pad,
            upper: hi + pad,
            step: cfg.wavelength() / 50.0,
            dimensions: n,
            budget: 100_000_000,
            exact: false,
        }
    }

    fn validate(&self) -> Result<(), OracleError> {
        if !(self.step > 0.0) {
            return Err(OracleError::InvalidGrid(format!("step {} must be positive", self.step)));
        }
        if self.upper <= self.lower {
            return Err(OracleError::InvalidGrid(format!(
                "upper {} must exceed lower {}",
                self.upper, self.lower
            )));
        }
        Ok(())
    }

    fn points(&self) -> u64 {
        ((self.upper - self.lower) / self.step).floor() as u64 + 1
    }
}

fn axis(lower: f64, upper: f64, step: f64) -> Vec<f64> {
    let count = ((upper - lower) / step).floor() as u64 + 1;
    (0..count).map(|i| lower + i as f64 * step).collect()
}

/// Evaluate one layout: channels, closed-form power split, rates.
fn evaluate(
    cfg: &SystemConfig,
    users: &UserPair,
    positions: &[f64],
) -> Option<(f64, PowerUpdateResult)> {
    let layout = AntennaLayout::new(positions.to_vec(), cfg.min_spacing_delta).ok()?;
    let channels = effective_channel(cfg, users, &layout).ok()?;
    let split = optimal_power_split(cfg, &channels, positions.len());
    if split.infeasible_qos {
        return None;
    }
    let (_, rate_s) = noma_rates(cfg, &channels, &split.alloc, positions.len());
    Some((rate_s, split))
}

/// Exhaustive search over antenna positions with per-point optimal power.
///
/// Ties are broken toward the lexicographically smallest layout so the
/// result is deterministic regardless of evaluation order.
pub fn exhaustive_search(
    cfg: &SystemConfig,
    users: &UserPair,
    n: usize,
    grid: &GridSpec,
) -> Result<Solution, OracleError> {
    grid.validate()?;
    match n {
        1 => search_n1(cfg, users, grid),
        2 => {
            if grid.exact {
                search_n2_exact(cfg, users, grid)
            } else {
                search_n2_two_pass(cfg, users, grid)
            }
        }
        other => Err(OracleError::UnsupportedAntennaCount(other)),
    }
}

type Best = Option<(f64, Vec<f64>, PowerUpdateResult)>;

fn better(current: &Best, rate: f64, positions: &[f64]) -> bool {
    match current {
        None => true,
        Some((r, p, _)) => rate > *r || (rate == *r && positions < p.as_slice()),
    }
}

fn finish(cfg: &SystemConfig, users: &UserPair, best: Best, evaluations: u64) -> Result<Solution, OracleError> {
    let (rate_s, positions, split) = best.ok_or(OracleError::NoFeasiblePoint)?;
    let layout = AntennaLayout::new(positions, cfg.min_spacing_delta)
        .expect("search layouts satisfy spacing");
    let channels = effective_channel(cfg, users, &layout).expect("search layouts are valid");
    let (rate_p, _) = noma_rates(cfg, &channels, &split.alloc, layout.len());
    Ok(Solution {
        layout,
        alloc: split.alloc,
        rate_p,
        rate_s,
        infeasible_qos: false,
        evaluations,
    })
}

fn search_n1(cfg: &SystemConfig, users: &UserPair, grid: &GridSpec) -> Result<Solution, OracleError> {
    let points = grid.points();
    if points > grid.budget {
        return Err(OracleError::BudgetExceeded { points, budget: grid.budget });
    }
    let xs = axis(grid.lower, grid.upper, grid.step);
    let best = xs
        .par_iter()
        .fold(
            || Best::None,
            |mut acc, &x| {
                if let Some((rate, split)) = evaluate(cfg, users, &[x]) {
                    if better(&acc, rate, &[x]) {
                        acc = Some((rate, vec![x], split));
                    }
                }
                acc
            },
        )
        .reduce(
            || Best::None,
            |a, b| match (&a, &b) {
                (_, None) => a,
                (None, _) => b,
                (Some(_), Some((rb, pb, _))) => {
                    if better(&a, *rb, pb) {
                        b
                    } else {
                        a
                    }
                }
            },
        );
    finish(cfg, users, best, points)
}

fn scan_pairs(
    cfg: &SystemConfig,
    users: &UserPair,
    xs: &[f64],
) -> (Best, u64) {
    let delta = cfg.min_spacing_delta;
    let results: Vec<(Best, u64)> = xs
        .par_iter()
        .enumerate()
        .map(|(i, &x1)| {
            let mut local = Best::None;
            let mut evals = 0u64;
            for &x2 in &xs[i + 1..] {
                if x2 - x1 < delta - 1e-12 {
                    continue;
                }
                evals += 1;
                if let Some((rate, split)) = evaluate(cfg, users, &[x1, x2]) {
                    if better(&local, rate, &[x1, x2]) {
                        local = Some((rate, vec![x1, x2], split));
                    }
                }
            }
            (local, evals)
        })
        .collect();
    let mut best = Best::None;
    let mut evals = 0u64;
    for (local, e) in results {
        evals += e;
        if let Some((r, p, _)) = &local {
            if better(&best, *r, p) {
                best = local;
            }
        }
    }
    (best, evals)
}

fn search_n2_exact(cfg: &SystemConfig, users: &UserPair, grid: &GridSpec) -> Result<Solution, OracleError> {
    let points = grid.points();
    let pairs = points * points / 2;
    if pairs > grid.budget {
        return Err(OracleError::BudgetExceeded { points: pairs, budget: grid.budget });
    }
    let xs = axis(grid.lower, grid.upper, grid.step);
    let (best, evals) = scan_pairs(cfg, users, &xs);
    finish(cfg, users, best, evals)
}

/// Number of top coarse cells refined in the two-pass scheme.
const REFINE_CELLS: usize = 4;

fn search_n2_two_pass(cfg: &SystemConfig, users: &UserPair, grid: &GridSpec) -> Result<Solution, OracleError> {
    let lambda = cfg.wavelength();
    let coarse_step = (lambda / 2.0).max(grid.step);
    let coarse = axis(grid.lower, grid.upper, coarse_step);
    let coarse_points = coarse.len() as u64;
    if coarse_points * coarse_points / 2 > grid.budget {
        return Err(OracleError::BudgetExceeded {
            points: coarse_points * coarse_points / 2,
            budget: grid.budget,
        });
    }

    // Coarse pass: keep the best few distinct cells.
    let delta = cfg.min_spacing_delta;
    let mut scored: Vec<(f64, [f64; 2])> = Vec::new();
    let mut evals = 0u64;
    let chunks: Vec<Vec<(f64, [f64; 2])>> = coarse
        .par_iter()
        .enumerate()
        .map(|(i, &x1)| {
            let mut local = Vec::new();
            for &x2 in &coarse[i + 1..] {
                if x2 - x1 < delta - 1e-12 {
                    continue;
                }
                if let Some((rate, _)) = evaluate(cfg, users, &[x1, x2]) {
                    local.push((rate, [x1, x2]));
                }
            }
            local
        })
        .collect();
    for mut chunk in chunks {
        evals += chunk.len() as u64;
        scored.append(&mut chunk);
    }
    if scored.is_empty() {
        return Err(OracleError::NoFeasiblePoint);
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.partial_cmp(&b.1).unwrap()));
    scored.truncate(REFINE_CELLS);

    // Refine lambda around each kept cell at the requested step.
    let mut best = Best::None;
    for (_, [cx1, cx2]) in scored {
        let xs1 = axis(cx1 - lambda, cx1 + lambda, grid.step);
        let xs2 = axis(cx2 - lambda, cx2 + lambda, grid.step);
        let local: Vec<(Best, u64)> = xs1
            .par_iter()
            .map(|&x1| {
                let mut acc = Best::None;
                let mut e = 0u64;
                for &x2 in &xs2 {
                    if x2 - x1 < delta - 1e-12 {
                        continue;
                    }
                    e += 1;
                    if let Some((rate, split)) = evaluate(cfg, users, &[x1, x2]) {
                        if better(&acc, rate, &[x1, x2]) {
                            acc = Some((rate, vec![x1, x2], split));
                        }
                    }
                }
                (acc, e)
            })
            .collect();
        for (acc, e) in local {
            evals += e;
            if let Some((r, p, _)) = &acc {
                if better(&best, *r, p) {
                    best = acc;
                }
            }
        }
    }
    finish(cfg, users, best, evals)
}

/// Largest feasible secondary power fraction on a grid of the given step.
///
/// This is the independent scan oracle for the closed-form power split;
/// it walks alpha_s over [0, 1] and keeps the largest value passing both
/// QoS checks.
pub fn power_scan(
    cfg: &SystemConfig,
    channels: &crate::model::EffectiveChannels,
    n_antennas: usize,
    step: f64,
) -> crate::model::PowerAllocation {
    assert!(step > 0.0 && step <= 0.01, "scan step must be in (0, 0.01]");
    let mut best: f64 = -1.0;
    let mut k = 0u64;
    loop {
        let alpha_s = (k as f64 * step).min(1.0);
        let alloc = crate::model::PowerAllocation::from_secondary(alpha_s)
            .expect("scan stays in range");
        if verify_qos(cfg, channels, &alloc, n_antennas).both() {
            best = alpha_s;
        }
        if alpha_s >= 1.0 {
            break;
        }
        k += 1;
    }
    // alpha_s = 0 with alpha_p = 1 is the possibly-infeasible sentinel.
    crate::model::PowerAllocation::from_secondary(best.max(0.0)).expect("in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::solve_n1;
    use crate::model::{dbm_to_watts, EffectiveChannels, PowerAllocation};
    use num_complex::Complex64;

    fn cfg(p_dbm: f64, gamma: f64) -> SystemConfig {
        SystemConfig::defaults(28e9, dbm_to_watts(p_dbm), gamma, 5.0)
    }

    #[test]
    fn n1_symmetric_instance_finds_midpoint_region() {
        // Power-limited symmetric instance: argmax within one grid step of
        // the midpoint.
        let users = UserPair::new(1.0, 1.5, 4.0, -1.5);
        let mut c = cfg(30.0, 0.1);
        let d = c.waveguide_height_d;
        let c_b = ((users.x_s - users.x_p) / 2.0).powi(2) + users.c_const(User::Primary, d);
        c.transmit_power = 1.5 * c.qos_target_gamma_p * c.noise_power_primary * c_b / c.eta();
        let grid = GridSpec::for_instance(&c, &users, 1);
        let sol = exhaustive_search(&c, &users, 1, &grid).unwrap();
        let mid = (users.x_p + users.x_s) / 2.0;
        assert!(
            (sol.layout.positions()[0] - mid).abs() <= grid.step,
            "argmax {} vs midpoint {mid}",
            sol.layout.positions()[0]
        );
    }

    #[test]
    fn n1_matches_closed_form() {
        let c = cfg(30.0, 0.1);
        for (x_p, y_p, x_s, y_s) in [(0.5, 0.0, 4.5, 3.0), (4.0, 2.0, 1.0, 1.0), (2.2, 0.3, 2.6, 2.9)] {
            let users = UserPair::new(x_p, y_p, x_s, y_s);
            let grid = GridSpec::for_instance(&c, &users, 1);
            let oracle = exhaustive_search(&c, &users, 1, &grid).unwrap();
            let closed = solve_n1(&c, &users);
            assert!(
                (oracle.rate_s - closed.secondary_rate).abs() < 1e-3,
                "({x_p},{y_p},{x_s},{y_s}): oracle {} vs closed {}",
                oracle.rate_s,
                closed.secondary_rate
            );
            // The grid can never beat the continuum optimum.
            assert!(oracle.rate_s <= closed.secondary_rate + 1e-12);
        }
    }

    #[test]
    fn grid_refinement_never_decreases_rate() {
        let c = cfg(30.0, 0.1);
        let users = UserPair::new(0.8, 1.0, 4.2, 2.0);
        let mut grid = GridSpec::for_instance(&c, &users, 1);
        grid.step = c.wavelength() / 10.0;
        let coarse = exhaustive_search(&c, &users, 1, &grid).unwrap();
        grid.step /= 2.0;
        let fine = exhaustive_search(&c, &users, 1, &grid).unwrap();
        assert!(fine.rate_s >= coarse.rate_s - 1e-15);
    }

    #[test]
    fn n2_layouts_respect_spacing() {
        let c = cfg(20.0, 0.5);
        let users = UserPair::new(1.0, 1.0, 3.5, 2.0);
        let mut grid = GridSpec::for_instance(&c, &users, 2);
        grid.step = c.wavelength() / 10.0; // keep the test quick
        let sol = exhaustive_search(&c, &users, 2, &grid).unwrap();
        let p = sol.layout.positions();
        assert_eq!(p.len(), 2);
        assert!(p[1] - p[0] >= c.min_spacing_delta - 1e-9);
    }

    #[test]
    fn two_pass_close_to_exact_on_small_span() {
        let c = cfg(25.0, 0.5);
        let users = UserPair::new(1.4, 0.8, 2.3, 1.9);
        let mut grid = GridSpec::for_instance(&c, &users, 2);
        grid.step = c.wavelength() / 25.0;
        let two_pass = exhaustive_search(&c, &users, 2, &grid).unwrap();
        grid.exact = true;
        let exact = exhaustive_search(&c, &users, 2, &grid).unwrap();
        assert!(
            two_pass.rate_s >= exact.rate_s - 0.02,
            "two-pass {} vs exact {}",
            two_pass.rate_s,
            exact.rate_s
        );
        assert!(two_pass.rate_s <= exact.rate_s + 1e-12);
    }

    #[test]
    fn rejects_unsupported_n() {
        let c = cfg(30.0, 0.1);
        let users = UserPair::new(1.0, 1.0, 4.0, 1.0);
        let grid = GridSpec::for_instance(&c, &users, 3);
        assert!(matches!(
            exhaustive_search(&c, &users, 3, &grid),
            Err(OracleError::UnsupportedAntennaCount(3))
        ));
    }

    #[test]
    fn budget_guard_trips() {
        let c = cfg(30.0, 0.1);
        let users = UserPair::new(0.0, 1.0, 5.0, 1.0);
        let mut grid = GridSpec::for_instance(&c, &users, 1);
        grid.budget = 10;
        assert!(matches!(
            exhaustive_search(&c, &users, 1, &grid),
            Err(OracleError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn power_scan_agrees_with_closed_form() {
        let c = cfg(30.0, 0.1);
        let ch = EffectiveChannels {
            h_p: Complex64::new(3e-4, 1e-4),
            h_s: Complex64::new(2e-4, -2e-4),
        };
        let split = crate::power::optimal_power_split(&c, &ch, 2);
        let scanned = power_scan(&c, &ch, 2, 1e-4);
        assert!((split.alloc.alpha_s - scanned.alpha_s).abs() <= 1e-4);
    }

    #[test]
    fn power_scan_infeasible_sentinel() {
        let c = cfg(-50.0, 10.0);
        let ch = EffectiveChannels {
            h_p: Complex64::new(1e-6, 0.0),
            h_s: Complex64::new(1e-6, 0.0),
        };
        let scanned = power_scan(&c, &ch, 2, 1e-3);
        assert_eq!(scanned.alpha_s, 0.0);
        let full_primary = PowerAllocation::from_secondary(0.0).unwrap();
        assert!(!verify_qos(&c, &ch, &full_primary, 2).both());
    }

    #[test]
    fn power_scan_tiny_gamma_gives_all_to_secondary() {
        let mut c = cfg(30.0, 0.1);
        c.qos_target_gamma_p = 1e-9;
        let ch = EffectiveChannels {
            h_p: Complex64::new(3e-4, 0.0),
            h_s: Complex64::new(3e-4, 0.0),
        };
        let scanned = power_scan(&c, &ch, 1, 1e-3);
        assert!(scanned.alpha_s >= 1.0 - 1e-3 - 1e-12);
    }
}
