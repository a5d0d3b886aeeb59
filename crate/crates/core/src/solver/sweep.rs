//! Projected nonlinear SOR in multicolor order.
//!
//! At a free node the stencil diagonal enters as `H_i(u) = R_i − (2u_i/h²)I`,
//! so the local equation `g(s) = F(R_i − 2s/h² I) − rhs = 0` is convex and
//! strictly decreasing in `s`; Newton from any start converges monotonically
//! after the first step.

use super::{max_defect, Kind, Level, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::hessian_stencil;
use crate::linalg::SymMatrix;
use crate::operator::EllipticOperator;
use crate::par;

const CHECK_EVERY: usize = 10;

/// Root of `s ↦ F(r − 2s/h² I) − rhs`, starting from `s0`.
#[inline]
pub(crate) fn local_solve(op: &EllipticOperator, r: &SymMatrix, h2: f64, rhs: f64, s0: f64) -> f64 {
    let d = r.dim();
    let k = 2.0 / h2;
    let shift = |s: f64| {
        let mut m = *r;
        for a in 0..d {
            m.set(a, a, r.get(a, a) - k * s);
        }
        m
    };
    let smooth = op.is_smooth();
    let mut s = s0;
    for _ in 0..60 {
        let m = shift(s);
        let (f, right) = op.eval_with_slope(&m);
        let g = f - rhs;
        if g.abs() <= 1e-14 * (1.0 + rhs.abs()) {
            break;
        }
        // d/ds F(r − k s I) = −k·(slope along the identity), taken on the
        // side the step will move to; the sides differ only for Pucci.
        let slope = if g > 0.0 || smooth {
            right
        } else {
            // Moving left raises the argument; use the left derivative.
            let eps = 1e-12 * (1.0 + m.spectral_norm());
            op.identity_slope(&(m - SymMatrix::scaled_identity(d, eps)))
        };
        let ds = g / (k * slope);
        s += ds;
        if ds.abs() <= 1e-16 * (1.0 + s.abs()) {
            break;
        }
    }
    s
}

pub(crate) fn solve(
    op: &EllipticOperator,
    lvl: &Level,
    u: &mut [f64],
    kind: Kind,
    opts: &SolverOptions,
) -> Result<usize> {
    let n = lvl.grid.n;
    let omega = opts.omega.unwrap_or_else(|| super::default_omega(n));
    let max_sweeps = opts.max_iter.unwrap_or(200 * n + 2000);
    let h2 = lvl.h2();
    let (rhs, project) = match kind {
        Kind::Obstacle => (1.0, true),
        Kind::Unconstrained { rhs } => (rhs, false),
    };
    let mut best = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        for nodes in &lvl.colors {
            let ur: &[f64] = u;
            let upd = par::map_slice(nodes, |&i| {
                let mut r = hessian_stencil(ur, &lvl.grid, i);
                let ui = ur[i];
                for a in 0..lvl.grid.dim {
                    r.set(a, a, r.get(a, a) + 2.0 * ui / h2);
                }
                let s = local_solve(op, &r, h2, rhs, ui);
                let v = (1.0 - omega) * ui + omega * s;
                if project {
                    v.max(0.0)
                } else {
                    v
                }
            });
            for (&i, v) in nodes.iter().zip(upd) {
                u[i] = v;
            }
        }
        if sweep % CHECK_EVERY == 0 || sweep == max_sweeps {
            let defect = max_defect(op, lvl, u, kind);
            if !defect.is_finite() {
                return Err(Error::NonConvergence("sweeps diverged".into()));
            }
            if defect <= opts.tol {
                return Ok(sweep);
            }
            best = best.min(defect);
        }
    }
    Err(Error::NonConvergence(format!(
        "projected sweeps: defect {best:.3e} above {:.1e} after {max_sweeps} sweeps",
        opts.tol
    )))
}
