//! Numerical checkers for the barrier, monotonicity and convexity lemmas.
//! Each check measures its hypotheses first and only asserts the conclusion
//! when they hold; otherwise the report carries the measurements alone.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::operator::{EllipticOperator, GammaDirection};
use crate::par;
use crate::quadratic::ApproxCertificate;
use crate::solver::{solve_dirichlet, Dirichlet, SolverOptions};

fn slack(g: &Grid) -> f64 {
    10.0 * g.h() * g.h()
}

fn unit(e: &[f64], dim: usize) -> Result<Vec<f64>> {
    if e.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: e.len() });
    }
    let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(Error::Precondition("zero direction".into()));
    }
    Ok(e.iter().map(|x| x / n).collect())
}

fn dist2(x: &[f64], c: &[f64], d: usize) -> f64 {
    (0..d).map(|a| (x[a] - c[a]).powi(2)).sum()
}

/// Data for the barrier: `F(D²w) = 1` in `B_r`, `w = ½γ|x|²` on
/// `∂B_r ∩ {|x₁| > η}` and `w = N` on `∂B_r ∩ {|x₁| ≤ η}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub r: f64,
    pub eta: f64,
    #[serde(rename = "N")]
    pub big_n: f64,
}

impl BarrierSpec {
    /// `0 < η < r < 1` and `N > 8γr²`; the exact-data case `N = ½γr²` is
    /// also admitted.
    pub fn validate(&self, gamma: f64) -> Result<()> {
        let exact = (self.big_n - 0.5 * gamma * self.r * self.r).abs() <= 1e-14;
        if !(0.0 < self.eta && self.eta < self.r && self.r < 1.0) {
            return Err(Error::Precondition(format!("need 0 < η < r < 1, got η = {}, r = {}", self.eta, self.r)));
        }
        if !self.big_n.is_finite() || !(exact || self.big_n > 8.0 * gamma * self.r * self.r) {
            return Err(Error::Precondition(format!("need N > 8γr² = {}", 8.0 * gamma * self.r * self.r)));
        }
        Ok(())
    }
}

/// Nodes with `|x| ≥ r` that share a stencil with a node of the open ball:
/// the discrete `∂B_r`.
fn ball_rim(g: &Grid, r: f64) -> Vec<usize> {
    let d = g.dim;
    let inside = |i: usize| dist2(&g.node_point(i), &[0.0; 3], d) < r * r;
    let offs = g.neighbor_offsets();
    (0..g.len())
        .filter(|&i| {
            !inside(i)
                && !g.is_boundary(i)
                && offs.iter().any(|&o| inside((i as isize + o) as usize))
        })
        .collect()
}

pub fn build_barrier(op: &EllipticOperator, spec: &BarrierSpec, grid: Grid) -> Result<ScalarField> {
    let gamma = op.gamma_of(&GammaDirection::Isotropic)?;
    spec.validate(gamma)?;
    if grid.dim != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: grid.dim });
    }
    let d = grid.dim;
    if !grid.contains_box(&[0.0; 3][..d], spec.r + grid.h()) {
        return Err(Error::OutsideDomain);
    }
    let data = ScalarField::from_fn(grid, |x| {
        if x[0].abs() <= spec.eta {
            spec.big_n
        } else {
            0.5 * gamma * dist2(x, &[0.0; 3], d)
        }
    });
    let problem = Dirichlet::ball(&data, &[0.0; 3][..d], spec.r);
    Ok(solve_dirichlet(op, &problem, 1.0, &SolverOptions::default())?.0)
}

/// Sunflower points in `B_{radius}`.
pub fn sample_centers(dim: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let s = radius * ((k as f64 + 0.5) / count as f64).sqrt();
            let t = golden * k as f64;
            let mut x = vec![0.0; dim];
            x[0] = s * t.cos();
            x[1] = s * t.sin();
            x
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterResult {
    /// The grid node used as `x₀`.
    pub x0: Vec<f64>,
    /// `min_{B_r} (w_{x₀} − γ|x − x₀|²/64)`.
    pub inner_margin: f64,
    /// `min (w_{x₀} − N/2)` on the rim nodes with `|x₁| ≤ η`; `None` if there
    /// are no such nodes.
    pub strip_margin: Option<f64>,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub spec: BarrierSpec,
    pub gamma: f64,
    pub slack: f64,
    pub centers: Vec<CenterResult>,
    /// Smallest `margin + slack` over all centers and both inequalities.
    pub min_slack: f64,
    pub passes: bool,
}

/// Checks `w_{x₀} ≥ γ|x − x₀|²/64` in `B_r` and `w_{x₀} ≥ N/2` on
/// `∂B_r ∩ {|x₁| ≤ η}` for each center, where
/// `w_{x₀}(x) = w(x) − w(x₀) − ∇w(x₀)·(x − x₀)`.
pub fn barrier_check(
    op: &EllipticOperator,
    w: &ScalarField,
    spec: &BarrierSpec,
    centers: &[Vec<f64>],
) -> Result<BarrierReport> {
    let g = w.grid;
    let d = g.dim;
    let gamma = op.gamma_of(&GammaDirection::Isotropic)?;
    spec.validate(gamma)?;
    let tol = slack(&g);
    let inner: Vec<usize> = g.ball_nodes(&[0.0; 3][..d], spec.r * (1.0 - 1e-12));
    let strip: Vec<usize> = ball_rim(&g, spec.r)
        .into_iter()
        .filter(|&i| g.node_point(i)[0].abs() <= spec.eta)
        .collect();
    let results = par::map_slice(centers, |c| -> Result<CenterResult> {
        if c.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: c.len() });
        }
        if dist2(c, &[0.0; 3], d) > 0.25 * spec.r * spec.r * (1.0 + 1e-12) {
            return Err(Error::Precondition("center outside B_{r/2}".into()));
        }
        let node = g.nearest(c);
        let x0 = g.node_point(node);
        let grad = w.gradient_at(node)?;
        let w0 = w.values[node];
        let wx0 = |i: usize| {
            let x = g.node_point(i);
            let lin: f64 = (0..d).map(|a| grad[a] * (x[a] - x0[a])).sum();
            (w.values[i] - w0 - lin, dist2(&x, &x0, d))
        };
        let inner_margin = inner.iter().fold(f64::INFINITY, |m, &i| {
            let (v, r2) = wx0(i);
            m.min(v - gamma * r2 / 64.0)
        });
        let strip_margin = (!strip.is_empty())
            .then(|| strip.iter().fold(f64::INFINITY, |m, &i| m.min(wx0(i).0 - 0.5 * spec.big_n)));
        let passes = inner_margin >= -tol && strip_margin.map_or(true, |s| s >= -tol);
        Ok(CenterResult {
            x0: x0[..d].to_vec(),
            inner_margin,
            strip_margin,
            passes,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let min_slack = results
        .iter()
        .map(|c| c.inner_margin.min(c.strip_margin.unwrap_or(f64::INFINITY)) + tol)
        .fold(f64::INFINITY, f64::min);
    let passes = results.iter().all(|c| c.passes);
    Ok(BarrierReport {
        spec: *spec,
        gamma,
        slack: tol,
        centers: results,
        min_slack,
        passes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaBar {
    /// Largest probed `η` that passed; `None` if even the smallest failed.
    pub eta_bar: Option<f64>,
    /// `(η, passes)` for every probe, in probe order.
    pub probes: Vec<(f64, bool)>,
}

/// Empirical `η̄` by bisection over `η = k·h`, `k = 0..⌊r/h⌋` (the strip only
/// changes at multiples of `h`). Assumes the check fails beyond `η̄`.
pub fn empirical_eta_bar(
    op: &EllipticOperator,
    r: f64,
    big_n: f64,
    grid: Grid,
    centers: &[Vec<f64>],
) -> Result<EtaBar> {
    let h = grid.h();
    let kmax = ((r / h).floor() as usize).saturating_sub(1);
    let mut probes = Vec::new();
    let mut probe = |k: usize| -> Result<bool> {
        // Halfway between grid lines, away from the switching points.
        let eta = (k as f64 + 0.5) * h;
        let spec = BarrierSpec { r, eta, big_n };
        let w = build_barrier(op, &spec, grid)?;
        let ok = barrier_check(op, &w, &spec, centers)?.passes;
        probes.push((eta, ok));
        Ok(ok)
    };
    if !probe(0)? {
        return Ok(EtaBar { eta_bar: None, probes });
    }
    if probe(kmax)? {
        let eta = (kmax as f64 + 0.5) * h;
        return Ok(EtaBar { eta_bar: Some(eta), probes });
    }
    let (mut lo, mut hi) = (0usize, kmax);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EtaBar {
        eta_bar: Some((lo as f64 + 0.5) * h),
        probes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotoneVariant {
    /// `D_e u ≥ σε` on `B_r ∩ {|x₁| ≥ η}`.
    Strip,
    /// `D_e u ≥ 0` on `B_r ∩ {|x₁| ≥ η}` and `D_e u ≥ σε` on
    /// `B_r ∩ {u > γr²/256}`.
    Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneParams {
    pub k: f64,
    pub sigma: f64,
    pub eta: f64,
    pub r: f64,
    pub eps: f64,
    pub center: Vec<f64>,
    pub variant: MonotoneVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    /// `min_{B_r} D_e u + Kε`.
    pub lower_margin: f64,
    /// Strip: `min D_e u − σε` on the strip complement. Level: `min D_e u`
    /// there.
    pub strip_margin: f64,
    /// Level variant only: `min D_e u − σε` on `{u > γr²/256}`.
    pub level_margin: Option<f64>,
    pub hypotheses_hold: bool,
    /// `min_{B_{r/2}} D_e u`.
    pub conclusion_min: f64,
    pub conclusion_tol: f64,
    /// `None` when the hypotheses fail.
    pub conclusion_holds: Option<bool>,
}

pub fn monotonicity_check(
    op: &EllipticOperator,
    u: &ScalarField,
    e: &[f64],
    params: &MonotoneParams,
) -> Result<MonotoneReport> {
    let g = u.grid;
    let d = g.dim;
    let e = unit(e, d)?;
    let c = &params.center;
    if c.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: c.len() });
    }
    if !(0.0 < params.eta && params.eta < params.r) {
        return Err(Error::Precondition("need 0 < η < r".into()));
    }
    let gamma = op.gamma_of(&GammaDirection::Isotropic)?;
    let tol = slack(&g);
    let nodes: Vec<usize> = u
        .checked_ball(c, params.r)?
        .into_iter()
        .filter(|&i| !g.is_boundary(i))
        .collect();
    let de: Vec<f64> = par::map_slice(&nodes, |&i| {
        let grad = u.gradient_at(i).expect("interior node");
        grad.iter().zip(&e).map(|(a, b)| a * b).sum()
    });
    let fold_min = |pred: &dyn Fn(usize) -> bool| {
        nodes
            .iter()
            .zip(&de)
            .filter(|(&i, _)| pred(i))
            .fold(f64::INFINITY, |m, (_, &v)| m.min(v))
    };
    let se = params.sigma * params.eps;
    let lower_margin = fold_min(&|_| true) + params.k * params.eps;
    let off_strip = |i: usize| (g.node_point(i)[0] - c[0]).abs() >= params.eta;
    let strip_min = fold_min(&off_strip);
    let (strip_margin, level_margin) = match params.variant {
        MonotoneVariant::Strip => (strip_min - se, None),
        MonotoneVariant::Level => {
            let level = gamma * params.r * params.r / 256.0;
            (strip_min, Some(fold_min(&|i| u.values[i] > level) - se))
        }
    };
    // Empty regions give +∞, which counts as vacuously satisfied.
    let hypotheses_hold =
        lower_margin >= -tol && strip_margin >= -tol && level_margin.map_or(true, |m| m >= -tol);
    let r2 = 0.25 * params.r * params.r;
    let conclusion_min = fold_min(&|i| dist2(&g.node_point(i), c, d) <= r2);
    let norm = nodes.iter().fold(0.0f64, |m, &i| m.max(u.values[i].abs()));
    let conclusion_tol = tol * norm;
    Ok(MonotoneReport {
        lower_margin,
        strip_margin,
        level_margin,
        hypotheses_hold,
        conclusion_min,
        conclusion_tol,
        conclusion_holds: hypotheses_hold.then_some(conclusion_min >= -conclusion_tol),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub d_ee_p: f64,
    pub eps: f64,
    /// `D_ee p / ε`: the largest `C_test` this case satisfies.
    pub ratio: f64,
    pub c_test: f64,
    /// `min_{B_{r/2}} D_ee u`.
    pub min_d_ee_u: f64,
    pub tol: f64,
    pub holds: bool,
}

/// Checks `D_ee u ≥ 0` on `B_{r/2}(center)` given `u ∈ S(p, ε, r)` and
/// `D_ee p ≥ C_test·ε`.
pub fn convexity_check(
    u: &ScalarField,
    cert: &ApproxCertificate,
    center: &[f64],
    e: &[f64],
    c_test: f64,
) -> Result<ConvexityReport> {
    let g = u.grid;
    let d = g.dim;
    let e = unit(e, d)?;
    if !cert.member {
        return Err(Error::Precondition("certificate does not witness S-membership".into()));
    }
    let d_ee_p = cert.p.a.quad_form(&e);
    if d_ee_p < c_test * cert.eps {
        return Err(Error::Precondition(format!(
            "D_ee p = {d_ee_p:.4e} below C_test·ε = {:.4e}",
            c_test * cert.eps
        )));
    }
    let tol = slack(&g);
    let nodes: Vec<usize> = u
        .checked_ball(center, 0.5 * cert.r)?
        .into_iter()
        .filter(|&i| !g.is_boundary(i))
        .collect();
    let min_d_ee_u = par::min_range(nodes.len(), |k| u.hessian_unchecked(nodes[k]).quad_form(&e));
    Ok(ConvexityReport {
        d_ee_p,
        eps: cert.eps,
        ratio: if cert.eps > 0.0 { d_ee_p / cert.eps } else { f64::INFINITY },
        c_test,
        min_d_ee_u,
        tol,
        holds: min_d_ee_u >= -tol,
    })
}

/// Smallest `C` such that every case with `ratio ≥ C` has the conclusion:
/// the largest ratio among failing cases (0 when none fail).
pub fn smallest_c_test(reports: &[ConvexityReport]) -> f64 {
    reports
        .iter()
        .filter(|r| !r.holds)
        .map(|r| r.ratio)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let g = 1.0;
        assert!(BarrierSpec { r: 0.5, eta: 0.005, big_n: 2.5 }.validate(g).is_ok());
        assert!(BarrierSpec { r: 0.5, eta: 0.005, big_n: 1.0 }.validate(g).is_err());
        assert!(BarrierSpec { r: 0.5, eta: 0.005, big_n: 0.125 }.validate(g).is_ok());
        assert!(BarrierSpec { r: 0.5, eta: 0.6, big_n: 2.5 }.validate(g).is_err());
        assert!(BarrierSpec { r: 1.0, eta: 0.1, big_n: 9.0 }.validate(g).is_err());
    }

    #[test]
    fn sunflower_stays_inside() {
        let c = sample_centers(2, 0.25, 25);
        assert_eq!(c.len(), 25);
        assert!(c.iter().all(|x| x[0].hypot(x[1]) <= 0.25));
    }

    #[test]
    fn smallest_c_is_the_worst_failure() {
        let rep = |ratio: f64, holds: bool| ConvexityReport {
            d_ee_p: ratio,
            eps: 1.0,
            ratio,
            c_test: 0.0,
            min_d_ee_u: 0.0,
            tol: 0.0,
            holds,
        };
        assert_eq!(smallest_c_test(&[rep(3.0, false), rep(5.0, true), rep(1.0, false)]), 3.0);
        assert_eq!(smallest_c_test(&[rep(5.0, true)]), 0.0);
    }
}
