//! Thin obstacle problem in the plane: `v ≥ 0` on the line `{x₁ = 0}`,
//! `Δv ≤ 0`, and `Δv = 0` off the contact part of the line. Also the
//! Almgren frequency `N(r) = r∫_{B_r}|∇v|² / ∫_{∂B_r}v²`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::par;

pub const N_RHO: usize = 400;
pub const N_THETA: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinOptions {
    /// Stop when no node moves by more than `tol·max(1, ‖data‖)` in a sweep.
    pub tol: f64,
    pub max_sweeps: Option<usize>,
    pub omega: Option<f64>,
}

impl Default for ThinOptions {
    fn default() -> Self {
        ThinOptions {
            tol: 1e-12,
            max_sweeps: None,
            omega: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinSolution {
    pub field: ScalarField,
    /// Column index `i₁` of the line `{x₁ = 0}`.
    pub line: usize,
    pub sweeps: usize,
}

impl ThinSolution {
    pub fn is_line_node(&self, idx: usize) -> bool {
        self.field.grid.multi_index(idx)[0] == self.line
    }

    /// Five-point Laplacian at every interior node (zero on the box boundary).
    pub fn laplacian(&self) -> Vec<f64> {
        let g = self.field.grid;
        let v = &self.field.values;
        let h2 = g.h() * g.h();
        let s = g.strides();
        par::map_range(g.len(), |i| {
            if g.is_boundary(i) {
                return 0.0;
            }
            (v[i + s[0]] + v[i - s[0]] + v[i + s[1]] + v[i - s[1]] - 4.0 * v[i]) / h2
        })
    }
}

/// Projected SOR sweeps on one level; returns the sweep count.
fn psor(v: &mut [f64], g: &Grid, line: usize, omega: f64, tol: f64, max_sweeps: usize) -> Result<usize> {
    let s = g.strides();
    let free: Vec<bool> = (0..g.len()).map(|i| !g.is_boundary(i)).collect();
    let colors = crate::solver::stencil::colored(g, &free);
    let mut line_flag = vec![false; g.len()];
    for (i, f) in line_flag.iter_mut().enumerate() {
        *f = g.multi_index(i)[0] == line;
    }
    for sweep in 1..=max_sweeps {
        let mut change: f64 = 0.0;
        for nodes in &colors {
            let vr: &[f64] = v;
            let upd = par::map_slice(nodes, |&i| {
                let avg = 0.25 * (vr[i + s[0]] + vr[i - s[0]] + vr[i + s[1]] + vr[i - s[1]]);
                let mut w = (1.0 - omega) * vr[i] + omega * avg;
                if line_flag[i] {
                    w = w.max(0.0);
                }
                w
            });
            for (&i, w) in nodes.iter().zip(upd) {
                change = change.max((w - v[i]).abs());
                v[i] = w;
            }
        }
        if change <= tol {
            return Ok(sweep);
        }
    }
    Err(Error::NonConvergence(format!(
        "thin obstacle PSOR: {max_sweeps} sweeps on n = {}",
        g.n
    )))
}

/// Bilinear prolongation from the grid with `(n+1)/2` nodes per side.
fn prolong(coarse: &ScalarField, fine: Grid) -> Vec<f64> {
    let cg = coarse.grid;
    let cs = cg.strides();
    let cv = &coarse.values;
    (0..fine.len())
        .map(|i| {
            let mi = fine.multi_index(i);
            let (a, b) = (mi[0], mi[1]);
            let (ia, ib) = (a / 2, b / 2);
            let at = |p: usize, q: usize| cv[p * cs[0] + q * cs[1]];
            match (a % 2, b % 2) {
                (0, 0) => at(ia, ib),
                (1, 0) => 0.5 * (at(ia, ib) + at(ia + 1, ib)),
                (0, 1) => 0.5 * (at(ia, ib) + at(ia, ib + 1)),
                _ => 0.25 * (at(ia, ib) + at(ia + 1, ib) + at(ia, ib + 1) + at(ia + 1, ib + 1)),
            }
        })
        .collect()
}

/// Solves the thin obstacle problem with the box-boundary values of `data`.
/// Interior values of `data` are ignored.
pub fn solve_thin(data: &ScalarField, opts: &ThinOptions) -> Result<ThinSolution> {
    let g = data.grid;
    if g.dim != 2 {
        return Err(Error::UnsupportedDimension(g.dim));
    }
    let scale = data.sup_norm().max(1.0);
    let tol = opts.tol * scale;
    let line = (g.n - 1) / 2;

    // Nested iteration: coarse solve, prolong, fix the fine boundary.
    let mut init: Vec<f64> = vec![0.0; g.len()];
    let mut total = 0;
    if (g.n + 1) / 2 >= 17 && (g.n - 1) % 4 == 0 {
        let cg = Grid::new(2, (g.n + 1) / 2, g.half_width)?;
        let cs = g.strides();
        let coarse_data = ScalarField::from_fn(cg, |x| {
            let mi = [
                ((x[0] + g.half_width) / g.h()).round() as usize,
                ((x[1] + g.half_width) / g.h()).round() as usize,
            ];
            data.values[mi[0] * cs[0] + mi[1] * cs[1]]
        });
        let c = solve_thin(&coarse_data, opts)?;
        init = prolong(&c.field, g);
        total += c.sweeps;
    }
    for i in 0..g.len() {
        if g.is_boundary(i) {
            init[i] = data.values[i];
        }
    }
    let omega = opts.omega.unwrap_or_else(|| 2.0 / (1.0 + (PI / (g.n - 1) as f64).sin()));
    let max_sweeps = opts.max_sweeps.unwrap_or(50 * g.n + 1000);
    let sweeps = psor(&mut init, &g, line, omega, tol, max_sweeps)?;
    Ok(ThinSolution {
        field: ScalarField { grid: g, values: init },
        line,
        sweeps: total + sweeps,
    })
}

/// Value and gradient of the cellwise bilinear interpolant. Cells never
/// straddle the line, so the kink of `v` across it is not smeared.
fn bilinear(f: &ScalarField, x: f64, y: f64) -> Result<(f64, f64, f64)> {
    let g = &f.grid;
    let h = g.h();
    let hw = g.half_width;
    let tol = 1e-9 * h;
    if x < -hw - tol || x > hw + tol || y < -hw - tol || y > hw + tol {
        return Err(Error::OutsideDomain);
    }
    let sx = (x + hw) / h;
    let sy = (y + hw) / h;
    let i = (sx.floor() as isize).clamp(0, g.n as isize - 2) as usize;
    let j = (sy.floor() as isize).clamp(0, g.n as isize - 2) as usize;
    let (tx, ty) = (sx - i as f64, sy - j as f64);
    let s = g.strides();
    let v = &f.values;
    let v00 = v[i * s[0] + j * s[1]];
    let v10 = v[(i + 1) * s[0] + j * s[1]];
    let v01 = v[i * s[0] + (j + 1) * s[1]];
    let v11 = v[(i + 1) * s[0] + (j + 1) * s[1]];
    let val = v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty;
    let gx = ((v10 - v00) * (1.0 - ty) + (v11 - v01) * ty) / h;
    let gy = ((v01 - v00) * (1.0 - tx) + (v11 - v10) * tx) / h;
    Ok((val, gx, gy))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub radii: Vec<f64>,
    pub frequency: Vec<f64>,
}

impl FrequencyProfile {
    /// Largest drop `N(r_i) − N(r_j)` over `r_i < r_j`.
    pub fn max_decrease(&self) -> f64 {
        let mut order: Vec<usize> = (0..self.radii.len()).collect();
        order.sort_by(|&a, &b| self.radii[a].total_cmp(&self.radii[b]));
        let mut best: f64 = 0.0;
        let mut peak = f64::NEG_INFINITY;
        for &k in &order {
            peak = peak.max(self.frequency[k]);
            best = best.max(peak - self.frequency[k]);
        }
        best
    }

    pub fn at_smallest_radius(&self) -> Option<f64> {
        (0..self.radii.len())
            .min_by(|&a, &b| self.radii[a].total_cmp(&self.radii[b]))
            .map(|k| self.frequency[k])
    }
}

/// Midpoint-rule `N(r)` in polar coordinates around `center`.
pub fn frequency_of_field(v: &ScalarField, center: &[f64], radii: &[f64]) -> Result<FrequencyProfile> {
    let g = v.grid;
    if g.dim != 2 {
        return Err(Error::UnsupportedDimension(g.dim));
    }
    let h = g.h();
    let v0 = bilinear(v, center[0], center[1])?.0;
    let scale = v.sup_norm().max(1e-300);
    if v0.abs() > 10.0 * h * h * scale.max(1.0) {
        return Err(Error::Precondition(format!("v(center) = {v0:.3e} is not 0")));
    }
    let dth = 2.0 * PI / N_THETA as f64;
    let angles: Vec<(f64, f64)> = (0..N_THETA)
        .map(|k| {
            let t = (k as f64 + 0.5) * dth;
            (t.cos(), t.sin())
        })
        .collect();
    let mut freq = Vec::with_capacity(radii.len());
    for &r in radii {
        if !(r > 0.0) || !g.contains_box(center, r) {
            return Err(Error::OutsideDomain);
        }
        let dr = r / N_RHO as f64;
        let rows = par::map_range(N_RHO, |k| -> Result<f64> {
            let rho = (k as f64 + 0.5) * dr;
            let mut acc = 0.0;
            for &(c, s) in &angles {
                let (_, gx, gy) = bilinear(v, center[0] + rho * c, center[1] + rho * s)?;
                acc += gx * gx + gy * gy;
            }
            Ok(acc * rho * dr * dth)
        });
        let mut energy = 0.0;
        for row in rows {
            energy += row?;
        }
        let mut mass = 0.0;
        for &(c, s) in &angles {
            let (val, _, _) = bilinear(v, center[0] + r * c, center[1] + r * s)?;
            mass += val * val;
        }
        mass *= r * dth;
        // Relative to the mass of a unit-size profile on ∂B_r.
        if mass <= 1e-14 * scale * scale * r {
            return Err(Error::Precondition(format!("∫_∂B_r v² vanishes at r = {r}")));
        }
        freq.push(r * energy / mass);
    }
    Ok(FrequencyProfile {
        radii: radii.to_vec(),
        frequency: freq,
    })
}

pub fn frequency(v: &ThinSolution, radii: &[f64]) -> Result<FrequencyProfile> {
    frequency_of_field(&v.field, &[0.0, 0.0], radii)
}

/// The three possibilities for a frequency at the origin: 1, 3/2, or ≥ 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Possibility {
    /// `a₊x₁⁺ + a₋x₁⁻ + o(|x|)`.
    One,
    /// `D_e v > 0` off the line near 0.
    Two,
    /// `½x·Ax + o(|x|²)`.
    Three,
}

pub const BAND_LOW: f64 = 1.25;
pub const BAND_HIGH: f64 = 1.75;

pub fn classify_thin(profile: &FrequencyProfile) -> Result<Possibility> {
    let n = profile
        .at_smallest_radius()
        .ok_or_else(|| Error::Insufficient("empty frequency profile".into()))?;
    Ok(if n < BAND_LOW {
        Possibility::One
    } else if n < BAND_HIGH {
        Possibility::Two
    } else {
        Possibility::Three
    })
}
