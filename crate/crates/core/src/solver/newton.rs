//! Newton-type routes: penalization with continuation in `δ`, the
//! semismooth active-set polish, and damped Newton for `F(D²h) = rhs`.

use super::stencil::{bicgstab, StencilMatrix};
use super::{max_defect, Kind, Level, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::hessian_stencil;
use crate::linalg::SymMatrix;
use crate::operator::EllipticOperator;
use crate::par;

const LINEAR_REL_TOL: f64 = 1e-7;
const PENALTY_TOL: f64 = 1e-7;
const MAX_ACTIVE_SET_ITERS: usize = 60;

/// `F(H_i u)` and `F_ij(H_i u)` at the free nodes of `mask`.
fn assemble(op: &EllipticOperator, lvl: &Level, u: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<SymMatrix>) {
    let d = lvl.grid.dim;
    let pairs = par::map_range(u.len(), |i| {
        if !mask[i] {
            return (0.0, SymMatrix::zeros(d));
        }
        let m = hessian_stencil(u, &lvl.grid, i);
        let f = op.eval_unchecked(&m);
        let c = op.derivative(&m).expect("smooth operator");
        (f, c)
    });
    pairs.into_iter().unzip()
}

fn linear_solve(lvl: &Level, a: &StencilMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let cap = 40 * lvl.grid.n + 500;
    bicgstab(a, rhs, LINEAR_REL_TOL, cap).map(|(x, _)| x)
}

fn inf_norm_masked(v: &[f64], mask: &[bool]) -> f64 {
    v.iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold(0.0, |acc, (x, _)| acc.max(x.abs()))
}

/// Damped Newton on a residual `G(u)` restricted to `lvl.free`.
/// `residual` returns `(G, extra diagonal of the Jacobian)`.
fn damped_newton<R>(
    op: &EllipticOperator,
    lvl: &Level,
    u: &mut [f64],
    tol: f64,
    max_iter: usize,
    residual: R,
) -> Result<usize>
where
    R: Fn(&[f64], f64, f64) -> (f64, f64) + Sync + Send,
{
    let eval = |u: &[f64]| -> (Vec<f64>, Vec<SymMatrix>, Vec<f64>, Vec<f64>) {
        let (f, c) = assemble(op, lvl, u, &lvl.free);
        let (g, extra): (Vec<f64>, Vec<f64>) = (0..u.len())
            .map(|i| if lvl.free[i] { residual(u, f[i], u[i]) } else { (0.0, 0.0) })
            .unzip();
        (f, c, g, extra)
    };
    let (_, mut c, mut g, mut extra) = eval(u);
    let mut norm = inf_norm_masked(&g, &lvl.free);
    for it in 0..max_iter {
        if norm <= tol {
            return Ok(it);
        }
        let a = StencilMatrix::from_coefficients(&lvl.grid, &lvl.free, &c, &extra);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let du = linear_solve(lvl, &a, &rhs)?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(x, d)| x + t * d).collect();
            let (_, c2, g2, e2) = eval(&trial);
            let n2 = inf_norm_masked(&g2, &lvl.free);
            if n2 < (1.0 - 1e-4 * t) * norm || t < 1e-3 {
                u.copy_from_slice(&trial);
                c = c2;
                g = g2;
                extra = e2;
                norm = n2;
                break;
            }
            t *= 0.5;
        }
    }
    if norm <= tol {
        return Ok(max_iter);
    }
    Err(Error::NonConvergence(format!(
        "Newton defect {norm:.3e} above {tol:.1e} after {max_iter} steps"
    )))
}

/// Damped Newton for `F(D²h) = rhs`.
pub(crate) fn unconstrained(
    op: &EllipticOperator,
    lvl: &Level,
    u: &mut [f64],
    rhs: f64,
    opts: &SolverOptions,
) -> Result<usize> {
    let max_iter = opts.max_iter.unwrap_or(60);
    damped_newton(op, lvl, u, opts.tol, max_iter, |_, f, _| (f - rhs, 0.0))
}

/// Penalization `F(D²u) − 1 − min(u, 0)/δ = 0` with `δ` from `1e-2` down to
/// `h²`, then the semismooth active-set polish on `min(u/h², 1 − F) = 0`.
///
/// `warm` levels (fed by a coarser solution) skip the continuation and start
/// at `δ = h²`.
pub(crate) fn penalized(
    op: &EllipticOperator,
    lvl: &Level,
    u: &mut [f64],
    warm: bool,
    opts: &SolverOptions,
) -> Result<usize> {
    let h2 = lvl.h2();
    let max_iter = opts.max_iter.unwrap_or(60);
    let mut deltas = Vec::new();
    let mut d = 1e-2;
    while d > h2 && !warm {
        deltas.push(d);
        d /= 10.0;
    }
    deltas.push(h2);
    let mut total = 0;
    for &delta in &deltas {
        total += damped_newton(op, lvl, u, PENALTY_TOL.max(opts.tol), max_iter, |_, f, ui| {
            if ui < 0.0 {
                (f - 1.0 - ui / delta, -1.0 / delta)
            } else {
                (f - 1.0, 0.0)
            }
        })?;
    }
    total += active_set(op, lvl, u, opts)?;
    Ok(total)
}

/// Primal-dual active-set iteration for `min(u/h², 1 − F(D²u)) = 0`.
fn active_set(op: &EllipticOperator, lvl: &Level, u: &mut [f64], opts: &SolverOptions) -> Result<usize> {
    let h2 = lvl.h2();
    let n = u.len();
    let mut prev_active: Option<Vec<bool>> = None;
    for it in 0..MAX_ACTIVE_SET_ITERS {
        let defect = max_defect(op, lvl, u, Kind::Obstacle);
        if defect <= opts.tol {
            return Ok(it);
        }
        let (f, _) = assemble(op, lvl, u, &lvl.free);
        let active: Vec<bool> = (0..n)
            .map(|i| lvl.free[i] && u[i] / h2 < 1.0 - f[i])
            .collect();
        for i in 0..n {
            if active[i] {
                u[i] = 0.0;
            }
        }
        let inactive: Vec<bool> = (0..n).map(|i| lvl.free[i] && !active[i]).collect();
        // Inner Newton on the inactive equations F(H u) = 1.
        let stalled = prev_active.as_ref() == Some(&active);
        let inner_steps = if stalled { 3 } else { 1 };
        for _ in 0..inner_steps {
            let (f, c) = assemble(op, lvl, u, &inactive);
            let g: Vec<f64> = (0..n).map(|i| if inactive[i] { f[i] - 1.0 } else { 0.0 }).collect();
            if inf_norm_masked(&g, &inactive) <= 0.1 * opts.tol {
                break;
            }
            let a = StencilMatrix::from_coefficients(&lvl.grid, &inactive, &c, &vec![0.0; n]);
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let du = linear_solve(lvl, &a, &rhs)?;
            for i in 0..n {
                if inactive[i] {
                    u[i] += du[i];
                }
            }
        }
        prev_active = Some(active);
    }
    let defect = max_defect(op, lvl, u, Kind::Obstacle);
    if defect <= opts.tol {
        return Ok(MAX_ACTIVE_SET_ITERS);
    }
    Err(Error::NonConvergence(format!(
        "active-set iteration stalled at defect {defect:.3e}"
    )))
}
