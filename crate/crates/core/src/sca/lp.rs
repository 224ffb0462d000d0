//! Small dense linear-program solver for the per-iteration subproblems.
//!
//! The subproblems built by the linearization step have N+1 variables and
//! O(N) rows, so a dense two-phase tableau simplex with Bland's rule is
//! enough. General `<=`, `>=` and `=` rows plus optional per-variable box
//! bounds are supported; free variables are split internally. Rows and
//! columns are equilibrated before solving because the raw subproblem data
//! mixes scales from square-meter channel gains (~1e-8) to linear SNRs
//! (~1e3).

use thiserror::Error;

/// Relation of one constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Le,
    Ge,
    Eq,
}

/// One linear constraint `coeffs . x (op) rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub op: RelOp,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, op: RelOp, rhs: f64) -> Self {
        Constraint { coeffs, op, rhs }
    }
}

/// Maximize `objective . x` subject to rows and per-variable bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// Per-variable (lower, upper); `None` means unbounded on that side.
    pub bounds: Vec<(Option<f64>, Option<f64>)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub point: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = base + sign * u[idx]
    Shift { idx: usize, base: f64, sign: f64 },
    /// x = u[pos] - u[neg]
    Split { pos: usize, neg: usize },
}

/// Solve the LP, returning an optimal vertex.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.objective.len();
    if n == 0 {
        return Err(LpError::Malformed("no variables".into()));
    }
    if lp.bounds.len() != n {
        return Err(LpError::Malformed(format!(
            "bounds length {} != variable count {n}",
            lp.bounds.len()
        )));
    }
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(LpError::Malformed(format!("row {i} has width {}", c.coeffs.len())));
        }
        if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Malformed(format!("row {i} contains non-finite entries")));
        }
    }

    // Map every variable onto nonnegative internal variables.
    let mut maps = Vec::with_capacity(n);
    let mut nu = 0usize;
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        match (lo, hi) {
            (Some(l), Some(h)) if l > h => return Err(LpError::Infeasible),
            (Some(l), _) => {
                maps.push(VarMap::Shift { idx: nu, base: l, sign: 1.0 });
                nu += 1;
            }
            (None, Some(h)) => {
                maps.push(VarMap::Shift { idx: nu, base: h, sign: -1.0 });
                nu += 1;
            }
            (None, None) => {
                maps.push(VarMap::Split { pos: nu, neg: nu + 1 });
                nu += 2;
            }
        }
        let _ = j;
    }

    // Transformed rows: original constraints plus upper-bound rows for
    // doubly-bounded variables.
    let mut rows: Vec<(Vec<f64>, RelOp, f64)> = Vec::new();
    let transform = |coeffs: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; nu];
        let mut shift = 0.0;
        for (j, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { idx, base, sign } => {
                    out[idx] += a * sign;
                    shift += a * base;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, shift)
    };
    for c in &lp.constraints {
        let (coeffs, shift) = transform(&c.coeffs);
        rows.push((coeffs, c.op, c.rhs - shift));
    }
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if let (Some(l), Some(h)) = (lo, hi) {
            // x = l + u, u <= h - l.
            if let VarMap::Shift { idx, .. } = maps[j] {
                let mut coeffs = vec![0.0; nu];
                coeffs[idx] = 1.0;
                rows.push((coeffs, RelOp::Le, h - l));
            }
        }
    }
    let (mut obj_u, obj_shift) = transform(&lp.objective);

    // Drop trivial rows; detect trivially infeasible ones.
    rows.retain(|(coeffs, op, rhs)| {
        let maxc = coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if maxc > 0.0 {
            return true;
        }
        // 0 . u (op) rhs
        let ok = match op {
            RelOp::Le => *rhs >= -FEAS_TOL,
            RelOp::Ge => *rhs <= FEAS_TOL,
            RelOp::Eq => rhs.abs() <= FEAS_TOL,
        };
        if !ok {
            // Keep it; the solver will report infeasibility via phase 1 on a
            // row that cannot be satisfied.
            return true;
        }
        false
    });

    // Column equilibration.
    let mut col_scale = vec![1.0f64; nu];
    for j in 0..nu {
        let mut m = obj_u[j].abs();
        for (coeffs, _, _) in &rows {
            m = m.max(coeffs[j].abs());
        }
        if m > 0.0 {
            col_scale[j] = 1.0 / m;
        }
    }
    for (coeffs, _, _) in rows.iter_mut() {
        for j in 0..nu {
            coeffs[j] *= col_scale[j];
        }
    }
    for j in 0..nu {
        obj_u[j] *= col_scale[j];
    }
    // Row equilibration.
    for (coeffs, _, rhs) in rows.iter_mut() {
        let m = coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m > 0.0 {
            for v in coeffs.iter_mut() {
                *v /= m;
            }
            *rhs /= m;
        }
    }

    // Standard form: Ge -> Le by negation, then slack/artificial columns.
    let m = rows.len();
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut b: Vec<f64> = Vec::with_capacity(m);
    let mut slack_sign: Vec<Option<f64>> = Vec::with_capacity(m); // None for Eq
    for (mut coeffs, op, mut rhs) in rows {
        let mut slack = match op {
            RelOp::Le => Some(1.0),
            RelOp::Ge => {
                for v in coeffs.iter_mut() {
                    *v = -*v;
                }
                rhs = -rhs;
                Some(1.0)
            }
            RelOp::Eq => None,
        };
        if rhs < 0.0 {
            for v in coeffs.iter_mut() {
                *v = -*v;
            }
            rhs = -rhs;
            if let Some(s) = slack.as_mut() {
                *s = -*s;
            }
        }
        a.push(coeffs);
        b.push(rhs);
        slack_sign.push(slack);
    }

    // Tableau columns: [u | slacks | artificials | rhs is kept separately].
    let n_slack = slack_sign.iter().filter(|s| s.is_some()).count();
    let mut art_rows: Vec<usize> = Vec::new();
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut slack_col = 0usize;
    for i in 0..m {
        let mut row = a[i].clone();
        row.resize(nu + n_slack, 0.0);
        if let Some(s) = slack_sign[i] {
            row[nu + slack_col] = s;
            if s > 0.0 {
                basis.push(nu + slack_col);
            } else {
                basis.push(usize::MAX); // placeholder, needs artificial
            }
            slack_col += 1;
        } else {
            basis.push(usize::MAX);
        }
        tab.push(row);
    }
    let n_art = basis.iter().filter(|&&v| v == usize::MAX).count();
    let total = nu + n_slack + n_art;
    let mut art_col = nu + n_slack;
    for i in 0..m {
        tab[i].resize(total, 0.0);
        if basis[i] == usize::MAX {
            tab[i][art_col] = 1.0;
            basis[i] = art_col;
            art_rows.push(i);
            art_col += 1;
        }
    }
    let art_start = nu + n_slack;

    // Phase 1: maximize -(sum of artificials).
    if n_art > 0 {
        let mut obj = vec![0.0f64; total];
        for j in art_start..total {
            obj[j] = -1.0;
        }
        let mut zval = 0.0;
        for &i in &art_rows {
            for j in 0..total {
                obj[j] += tab[i][j];
            }
            zval -= b[i];
        }
        run_simplex(&mut tab, &mut b, &mut basis, &mut obj, &mut zval, total, None)?;
        let bsum: f64 = b.iter().map(|v| v.abs()).sum();
        if zval < -FEAS_TOL * (1.0 + bsum) {
            return Err(LpError::Infeasible);
        }
        // Drive any basic artificial out of the basis where possible.
        for i in 0..m {
            if basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| tab[i][j].abs() > PIVOT_TOL) {
                    pivot(&mut tab, &mut b, &mut basis, &mut vec![0.0; total], &mut 0.0, i, j);
                }
            }
        }
    }

    // Phase 2: maximize the real objective; artificial columns are frozen.
    let mut obj = vec![0.0f64; total];
    obj[..nu].copy_from_slice(&obj_u);
    let mut zval = 0.0;
    for i in 0..m {
        let bi = basis[i];
        let cb = if bi < nu { obj_u[bi] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..total {
                obj[j] -= cb * tab[i][j];
            }
            zval += cb * b[i];
        }
    }
    // Restore reduced-cost convention: obj[j] now holds c_j - z_j for
    // nonbasic j and 0 for basic j.
    for i in 0..m {
        let bi = basis[i];
        if bi < nu {
            obj[bi] = 0.0;
        }
    }
    run_simplex(&mut tab, &mut b, &mut basis, &mut obj, &mut zval, art_start, Some(()))?;

    // Recover u, then x.
    let mut u = vec![0.0f64; nu];
    for i in 0..m {
        if basis[i] < nu {
            u[basis[i]] = b[i];
        }
    }
    let mut x = vec![0.0f64; n];
    for (j, map) in maps.iter().enumerate() {
        x[j] = match *map {
            VarMap::Shift { idx, base, sign } => base + sign * u[idx] * col_scale[idx],
            VarMap::Split { pos, neg } => u[pos] * col_scale[pos] - u[neg] * col_scale[neg],
        };
    }
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let _ = (obj_shift, zval);
    Ok(LpSolution { point: x, objective })
}

/// Bland-rule simplex loop over columns `0..limit`.
fn run_simplex(
    tab: &mut [Vec<f64>],
    b: &mut [f64],
    basis: &mut [usize],
    obj: &mut Vec<f64>,
    zval: &mut f64,
    limit: usize,
    phase2: Option<()>,
) -> Result<(), LpError> {
    let m = tab.len();
    let max_iters = 50 * (m + limit + 10);
    for _ in 0..max_iters {
        // Entering: smallest index with positive reduced cost (Bland).
        let Some(e) = (0..limit).find(|&j| obj[j] > PIVOT_TOL) else {
            return Ok(());
        };
        // Leaving: minimum ratio, ties broken by smallest basic index.
        let mut best: Option<(f64, usize, usize)> = None; // (ratio, basis var, row)
        for i in 0..m {
            let aie = tab[i][e];
            if aie > PIVOT_TOL {
                let ratio = b[i] / aie;
                let cand = (ratio, basis[i], i);
                best = match best {
                    None => Some(cand),
                    Some(cur) => {
                        if ratio < cur.0 - 1e-12 || (ratio < cur.0 + 1e-12 && basis[i] < cur.1) {
                            Some(cand)
                        } else {
                            Some(cur)
                        }
                    }
                };
            }
        }
        let Some((_, _, r)) = best else {
            return if phase2.is_some() { Err(LpError::Unbounded) } else {
                // Phase 1 is always bounded below by 0; numerical guard.
                Err(LpError::Malformed("phase-1 unbounded".into()))
            };
        };
        pivot(tab, b, basis, obj, zval, r, e);
    }
    Err(LpError::Malformed("simplex iteration limit reached".into()))
}

fn pivot(
    tab: &mut [Vec<f64>],
    b: &mut [f64],
    basis: &mut [usize],
    obj: &mut Vec<f64>,
    zval: &mut f64,
    r: usize,
    e: usize,
) {
    let m = tab.len();
    let piv = tab[r][e];
    let inv = 1.0 / piv;
    for v in tab[r].iter_mut() {
        *v *= inv;
    }
    b[r] *= inv;
    tab[r][e] = 1.0;
    for i in 0..m {
        if i == r {
            continue;
        }
        let f = tab[i][e];
        if f != 0.0 {
            let (head, tail) = if i < r {
                let (a, c) = tab.split_at_mut(r);
                (&mut a[i], &c[0])
            } else {
                let (a, c) = tab.split_at_mut(i);
                (&mut c[0], &a[r])
            };
            for (hv, tv) in head.iter_mut().zip(tail.iter()) {
                *hv -= f * tv;
            }
            head[e] = 0.0;
            b[i] -= f * b[r];
            if b[i] < 0.0 && b[i] > -1e-12 {
                b[i] = 0.0;
            }
        }
    }
    let f = obj[e];
    if f != 0.0 {
        for (ov, tv) in obj.iter_mut().zip(tab[r].iter()) {
            *ov -= f * tv;
        }
        obj[e] = 0.0;
        *zval += f * b[r];
    }
    basis[r] = e;
}
