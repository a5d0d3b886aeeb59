//! Numerical comparison check: `Φ ≤ u ≤ Ψ` for a discrete sub/supersolution
//! pair whose hypotheses are verified first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::operator::EllipticOperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `max (Φ − u)⁺` over the region (0 when no `Φ` given).
    pub phi_violation: f64,
    /// `max (u − Ψ)⁺` over the region (0 when no `Ψ` given).
    pub psi_violation: f64,
    pub slack: f64,
    pub passes: bool,
}

/// Checks `Φ ≤ u ≤ Ψ` on `region` (all nodes when `None`).
///
/// Hypotheses, each with slack `10h²`: `F(D²Φ) ≥ 1` on `{Φ > 0}` and
/// `Φ ≤ u` on the region boundary; `F(D²Ψ) ≤ 1`, `Ψ ≥ 0`, and `Ψ ≥ u` on the
/// region boundary. Interior nodes are region nodes whose whole stencil lies
/// in the region.
pub fn comparison_check(
    op: &EllipticOperator,
    u: &ScalarField,
    phi: Option<&ScalarField>,
    psi: Option<&ScalarField>,
    region: Option<&[bool]>,
) -> Result<ComparisonReport> {
    let g = u.grid;
    for f in phi.iter().chain(psi.iter()) {
        if f.grid != g {
            return Err(Error::InvalidGrid("comparison fields must share the grid".into()));
        }
    }
    let all = vec![true; g.len()];
    let region = region.unwrap_or(&all);
    let h = g.h();
    let slack = 10.0 * h * h;
    let offs = g.neighbor_offsets();
    let interior: Vec<bool> = (0..g.len())
        .map(|i| {
            region[i]
                && !g.is_boundary(i)
                && offs.iter().all(|&o| region[(i as isize + o) as usize])
        })
        .collect();

    let mut failures = Vec::new();
    if let Some(phi) = phi {
        for i in (0..g.len()).filter(|&i| region[i]) {
            if interior[i] {
                if phi.values[i] > 0.0 {
                    let f = op.eval_unchecked(&phi.hessian_unchecked(i));
                    if f < 1.0 - slack {
                        failures.push(format!("F(D²Φ) = {f:.4e} < 1 at node {i} where Φ > 0"));
                        break;
                    }
                }
            } else if phi.values[i] > u.values[i] + slack {
                failures.push(format!("Φ > u on the boundary at node {i}"));
                break;
            }
        }
    }
    if let Some(psi) = psi {
        for i in (0..g.len()).filter(|&i| region[i]) {
            if psi.values[i] < -slack {
                failures.push(format!("Ψ < 0 at node {i}"));
                break;
            }
            if interior[i] {
                let f = op.eval_unchecked(&psi.hessian_unchecked(i));
                if f > 1.0 + slack {
                    failures.push(format!("F(D²Ψ) = {f:.4e} > 1 at node {i}"));
                    break;
                }
            } else if psi.values[i] < u.values[i] - slack {
                failures.push(format!("Ψ < u on the boundary at node {i}"));
                break;
            }
        }
    }
    if !failures.is_empty() {
        return Err(Error::Hypotheses(failures.join("; ")));
    }

    let max_over = |f: &dyn Fn(usize) -> f64| {
        (0..g.len())
            .filter(|&i| region[i])
            .map(f)
            .fold(0.0, f64::max)
    };
    let phi_violation = phi.map_or(0.0, |p| max_over(&|i| p.values[i] - u.values[i]));
    let psi_violation = psi.map_or(0.0, |p| max_over(&|i| u.values[i] - p.values[i]));
    Ok(ComparisonReport {
        phi_violation,
        psi_violation,
        slack,
        passes: phi_violation <= slack && psi_violation <= slack,
    })
}
