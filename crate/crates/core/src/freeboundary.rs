//! Contact sets, the thickness function `δ_E(r) = MD(E ∩ B_r)/r`, and
//! regular/singular classification of free-boundary points.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point, ScalarField};
use crate::par;
use crate::quadratic::fit_quadratic;

pub const DIRECTIONS_2D: usize = 720;
pub const DIRECTIONS_3D: usize = 2000;

/// Nodes with `u ≤ h²`, and those among them next to a positivity node.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSet {
    pub grid: Grid,
    pub nodes: Vec<usize>,
    pub boundary_nodes: Vec<usize>,
}

impl ContactSet {
    pub fn points(&self) -> Vec<Point> {
        self.nodes.iter().map(|&i| self.grid.node_point(i)).collect()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }
}

/// Calls `f` with each in-grid neighbor (full `3^d − 1` stencil) of `i`.
fn for_each_neighbor(g: &Grid, i: usize, mut f: impl FnMut(usize)) {
    let mi = g.multi_index(i);
    let d = g.dim;
    let span = |a: usize| -> std::ops::RangeInclusive<isize> {
        if a < d {
            -1..=1
        } else {
            0..=0
        }
    };
    for di in span(0) {
        for dj in span(1) {
            for dk in span(2) {
                if di == 0 && dj == 0 && dk == 0 {
                    continue;
                }
                let off = [di, dj, dk];
                let mut nb = [0usize; 3];
                let mut inside = true;
                for a in 0..d {
                    let v = mi[a] as isize + off[a];
                    if v < 0 || v >= g.n as isize {
                        inside = false;
                    }
                    nb[a] = v.max(0) as usize;
                }
                if inside {
                    f(g.index(&nb));
                }
            }
        }
    }
}

pub fn extract_contact(u: &ScalarField) -> ContactSet {
    let g = u.grid;
    let tol = g.h() * g.h();
    let nodes: Vec<usize> = (0..g.len()).filter(|&i| u.values[i] <= tol).collect();
    let flags = par::map_slice(&nodes, |&i| {
        let mut touches = false;
        for_each_neighbor(&g, i, |j| touches |= u.values[j] > tol);
        touches
    });
    let boundary_nodes = nodes
        .iter()
        .zip(flags)
        .filter_map(|(&i, b)| b.then_some(i))
        .collect();
    ContactSet {
        grid: g,
        nodes,
        boundary_nodes,
    }
}

/// Unit directions covering the sphere up to sign.
pub fn sample_directions(dim: usize) -> Vec<Point> {
    match dim {
        2 => (0..DIRECTIONS_2D)
            .map(|k| {
                let t = PI * k as f64 / DIRECTIONS_2D as f64;
                [t.cos(), t.sin(), 0.0]
            })
            .collect(),
        _ => {
            // Fibonacci sphere.
            let golden = PI * (3.0 - 5f64.sqrt());
            let n = DIRECTIONS_3D;
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let s = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    [s * phi.cos(), s * phi.sin(), z]
                })
                .collect()
        }
    }
}

/// Minimal slab width of `E ∩ B_r(center)` over sampled directions.
pub fn min_diameter(points: &[Point], dim: usize, center: &[f64], r: f64) -> Result<f64> {
    let r2 = r * r * (1.0 + 1e-12);
    let local: Vec<Point> = points
        .iter()
        .filter_map(|p| {
            let mut y = [0.0; 3];
            let mut s = 0.0;
            for a in 0..dim {
                y[a] = p[a] - center[a];
                s += y[a] * y[a];
            }
            (s <= r2).then_some(y)
        })
        .collect();
    match local.len() {
        0 => return Err(Error::EmptyBall { radius: r }),
        1 => return Ok(0.0),
        _ => {}
    }
    let dirs = sample_directions(dim);
    Ok(par::min_range(dirs.len(), |k| {
        let e = dirs[k];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in &local {
            let t = y[0] * e[0] + y[1] * e[1] + y[2] * e[2];
            lo = lo.min(t);
            hi = hi.max(t);
        }
        hi - lo
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessProfile {
    pub radii: Vec<f64>,
    pub delta: Vec<f64>,
}

/// `δ(r) = MD(E ∩ B_r)/r` per radius; radii are sorted decreasing.
pub fn thickness_profile(e: &ContactSet, center: &[f64], radii: &[f64]) -> Result<ThicknessProfile> {
    let h = e.grid.h();
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| b.total_cmp(a));
    radii.dedup();
    if let Some(&r) = radii.last() {
        if r < 2.0 * h * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!("radius {r} below 2h")));
        }
    }
    let pts = e.points();
    let delta = radii
        .iter()
        .map(|&r| min_diameter(&pts, e.grid.dim, center, r).map(|w| w / r))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ThicknessProfile { radii, delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointClass {
    Regular,
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub thresh_sing: f64,
    /// Smallest reliable radius in units of `h`.
    pub r_min_cells: f64,
    /// Radius of the template fits and the largest profile radius.
    pub fit_radius: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            thresh_sing: 0.2,
            r_min_cells: 32.0,
            fit_radius: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: PointClass,
    pub r_min: f64,
    pub delta_r_min: f64,
    pub profile: ThicknessProfile,
    /// RMS residual of the best quadratic fit on `B_fit`.
    pub q_residual: f64,
    /// RMS residual of the best `½γ((x·e)⁺)²` fit on `B_fit`.
    pub halfspace_residual: f64,
    pub halfspace_direction: Vec<f64>,
}

fn rms_residual_quadratic(u: &ScalarField, center: &[f64], r: f64) -> Result<f64> {
    let p = fit_quadratic(u, center, r, true)?;
    let g = &u.grid;
    let d = g.dim;
    let nodes = u.checked_ball(center, r)?;
    let ss = par::sum_range(nodes.len(), |k| {
        let x = g.node_point(nodes[k]);
        let y: Vec<f64> = (0..d).map(|a| x[a] - center[a]).collect();
        (u.values[nodes[k]] - p.eval(&y)).powi(2)
    });
    Ok((ss / nodes.len() as f64).sqrt())
}

/// Best half-space template over sampled directions; `γ` by least squares.
fn halfspace_fit(u: &ScalarField, center: &[f64], r: f64) -> Result<(f64, Point)> {
    let g = &u.grid;
    let d = g.dim;
    let nodes = u.checked_ball(center, r)?;
    let ys: Vec<(Point, f64)> = nodes
        .iter()
        .map(|&i| {
            let x = g.node_point(i);
            let mut y = [0.0; 3];
            for a in 0..d {
                y[a] = x[a] - center[a];
            }
            (y, u.values[i])
        })
        .collect();
    // Directions over the full circle/sphere: the template is not even.
    let mut dirs = sample_directions(d);
    let neg: Vec<Point> = dirs.iter().map(|e| [-e[0], -e[1], -e[2]]).collect();
    dirs.extend(neg);
    let fits = par::map_slice(&dirs, |e| {
        let (mut tt, mut ut, mut uu) = (0.0, 0.0, 0.0);
        for (y, v) in &ys {
            let s = (y[0] * e[0] + y[1] * e[1] + y[2] * e[2]).max(0.0);
            let t = 0.5 * s * s;
            tt += t * t;
            ut += v * t;
            uu += v * v;
        }
        let gamma = if tt > 0.0 { ut / tt } else { 0.0 };
        let ss = (uu - 2.0 * gamma * ut + gamma * gamma * tt).max(0.0);
        (ss, *e)
    });
    let (ss, e) = fits
        .into_iter()
        .fold((f64::INFINITY, [0.0; 3]), |best, f| if f.0 < best.0 { f } else { best });
    Ok(((ss / ys.len() as f64).sqrt(), e))
}

/// Regular/singular classification of a contact node `x0`.
pub fn classify_point(u: &ScalarField, x0: &[f64], opts: &ClassifyOptions) -> Result<Classification> {
    let g = u.grid;
    let h = g.h();
    let node = g.nearest(x0);
    let xc = g.node_point(node);
    let center = &xc[..g.dim];
    if u.values[node] > h * h {
        return Err(Error::Precondition("x0 is not a contact node".into()));
    }
    let r_min = opts.r_min_cells * h;
    if r_min > opts.fit_radius {
        return Err(Error::Precondition(format!(
            "grid too coarse: r_min = {r_min} exceeds the fit radius {}",
            opts.fit_radius
        )));
    }
    if !g.contains_box(center, opts.fit_radius) {
        return Err(Error::OutsideDomain);
    }
    let mut radii = Vec::new();
    let mut r = r_min;
    while r < opts.fit_radius * (1.0 - 1e-9) {
        radii.push(r);
        r *= 2.0;
    }
    radii.push(opts.fit_radius);
    let contact = extract_contact(u);
    let profile = thickness_profile(&contact, center, &radii)?;
    let delta_r_min = *profile.delta.last().expect("nonempty profile");
    let q_residual = rms_residual_quadratic(u, center, opts.fit_radius)?;
    let (halfspace_residual, e) = halfspace_fit(u, center, opts.fit_radius)?;
    let singular = delta_r_min < opts.thresh_sing && q_residual <= halfspace_residual;
    Ok(Classification {
        class: if singular {
            PointClass::Singular
        } else {
            PointClass::Regular
        },
        r_min,
        delta_r_min,
        profile,
        q_residual,
        halfspace_residual,
        halfspace_direction: e[..g.dim].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_and_empty() {
        let pts = vec![[0.0; 3]];
        assert_eq!(min_diameter(&pts, 2, &[0.0, 0.0], 0.5).unwrap(), 0.0);
        assert!(min_diameter(&pts, 2, &[1.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn fibonacci_directions_are_unit() {
        for e in sample_directions(3) {
            let n = e.iter().map(|x| x * x).sum::<f64>();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(sample_directions(2).len(), DIRECTIONS_2D);
    }
}
