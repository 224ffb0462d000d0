//! Newton-method placement initialization.
//!
//! The starting layout fixes equal spacing `x̃_n = x̃_1 + (n-1)Δ` and picks
//! `x̃_1` to maximize the path-loss proxy
//!
//! ```text
//! g(x1) = sum_n [ (x1 + (n-1)Δ - x_p)^2 + C_p ]^(-1/2)
//!       + sum_n [ (x1 + (n-1)Δ - x_s)^2 + C_s ]^(-1/2)
//! ```
//!
//! Newton iterations on g' converge in a handful of steps because g is
//! smooth and, in practice, unimodal. If an iteration lands on a point with
//! g'' > 0 (a minimum) or fails to converge, restarts are spread over the
//! user span; as a last resort the midpoint layout is returned with a flag.

use crate::model::{AntennaLayout, SystemConfig, UserPair};

/// |g'| threshold that counts as a critical point.
pub const GRAD_TOL: f64 = 1e-8;
/// Newton iteration cap per start point.
pub const MAX_NEWTON_ITERS: usize = 100;
/// Number of perturbed restart points tried after a failed run.
pub const RESTARTS: usize = 8;

/// Result of the placement initialization.
#[derive(Debug, Clone)]
pub struct NewtonInit {
    pub layout: AntennaLayout,
    /// True when every Newton run failed and the midpoint layout was used.
    pub fallback: bool,
    /// Newton iterations spent over all restarts.
    pub iterations: usize,
}

/// Path-loss targets: one `(x_m, C_m)` entry per served user.
#[derive(Debug, Clone, Copy)]
pub struct Target {
    pub x: f64,
    pub c: f64,
}

/// g(x1) for the equally spaced array.
pub fn objective(x1: f64, targets: &[Target], spacing: f64, n: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..n {
        let xk = x1 + k as f64 * spacing;
        for t in targets {
            let dx = xk - t.x;
            acc += 1.0 / (dx * dx + t.c).sqrt();
        }
    }
    acc
}

/// First derivative g'(x1).
pub fn derivative(x1: f64, targets: &[Target], spacing: f64, n: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..n {
        let xk = x1 + k as f64 * spacing;
        for t in targets {
            let dx = xk - t.x;
            acc -= dx / (dx * dx + t.c).powf(1.5);
        }
    }
    acc
}

/// Second derivative g''(x1).
pub fn second_derivative(x1: f64, targets: &[Target], spacing: f64, n: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..n {
        let xk = x1 + k as f64 * spacing;
        for t in targets {
            let dx = xk - t.x;
            let q = dx * dx + t.c;
            acc += 3.0 * dx * dx / q.powf(2.5) - q.powf(-1.5);
        }
    }
    acc
}

/// Run Newton from one start point. Returns the critical point if it
/// converged to a local maximum.
fn newton_run(
    start: f64,
    targets: &[Target],
    spacing: f64,
    n: usize,
    guard: (f64, f64),
    iters: &mut usize,
) -> Option<f64> {
    let mut x = start;
    for _ in 0..MAX_NEWTON_ITERS {
        *iters += 1;
        let g1 = derivative(x, targets, spacing, n);
        if g1.abs() < GRAD_TOL {
            return (second_derivative(x, targets, spacing, n) < 0.0).then_some(x);
        }
        let g2 = second_derivative(x, targets, spacing, n);
        if g2 == 0.0 || !g2.is_finite() {
            return None;
        }
        x -= g1 / g2;
        if !x.is_finite() || x < guard.0 || x > guard.1 {
            return None;
        }
    }
    None
}

/// Generic initialization over a set of path-loss targets.
pub fn init_targets(
    targets: &[Target],
    spacing: f64,
    n: usize,
    span: (f64, f64),
) -> NewtonInit {
    let (lo, hi) = span;
    let centroid: f64 = targets.iter().map(|t| t.x).sum::<f64>() / targets.len() as f64;
    let array_shift = (n - 1) as f64 * spacing / 2.0;
    let start = centroid - array_shift;
    // Keep iterates within a widened window around the user span.
    let width = (hi - lo).max(1.0);
    let guard = (lo - 2.0 * width - array_shift, hi + 2.0 * width);

    let mut iterations = 0usize;
    let mut found = newton_run(start, targets, spacing, n, guard, &mut iterations);
    if found.is_none() {
        for k in 0..RESTARTS {
            // Restarts spread over [lo, hi], offset by the array half-width.
            let frac = (k as f64 + 0.5) / RESTARTS as f64;
            let s = lo + frac * (hi - lo) - array_shift;
            found = newton_run(s, targets, spacing, n, guard, &mut iterations);
            if found.is_some() {
                break;
            }
        }
    }
    match found {
        Some(x1) => NewtonInit {
            layout: AntennaLayout::equally_spaced(x1, spacing, n),
            fallback: false,
            iterations,
        },
        None => NewtonInit {
            layout: AntennaLayout::equally_spaced(start, spacing, n),
            fallback: true,
            iterations,
        },
    }
}

/// Initialization for the two-user NOMA problem.
pub fn newton_init(cfg: &SystemConfig, users: &UserPair, n: usize) -> NewtonInit {
    let d = cfg.waveguide_height_d;
    let targets = [
        Target { x: users.x_p, c: users.c_const(crate::model::User::Primary, d) },
        Target { x: users.x_s, c: users.c_const(crate::model::User::Secondary, d) },
    ];
    let lo = users.x_p.min(users.x_s) - cfg.region_side_d;
    let hi = users.x_p.max(users.x_s);
    init_targets(&targets, cfg.min_spacing_delta, n, (lo, hi))
}
