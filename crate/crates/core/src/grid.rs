//! Uniform box grids, scalar fields, finite differences, interpolation and
//! the parabolic rescaling `u_r(x) = u(x₀ + r x)/r²`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::par;

/// Point in up to three dimensions; components past `dim` are zero.
pub type Point = [f64; 3];

pub fn point(coords: &[f64]) -> Point {
    let mut p = [0.0; 3];
    p[..coords.len()].copy_from_slice(coords);
    p
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Box `[−half_width, half_width]^dim` with `n` nodes per axis (row-major,
/// last axis fastest).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if n < 17 || n % 2 == 0 {
            return Err(Error::InvalidGrid(format!("n = {n} must be odd and ≥ 17")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half_width = {half_width} must be > 0")));
        }
        Ok(Self { dim, n, half_width })
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index stride of each axis.
    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        match self.dim {
            2 => [self.n, 1, 0],
            _ => [self.n * self.n, self.n, 1],
        }
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        // Symmetric form keeps the center node at exactly 0.
        let c = (self.n - 1) / 2;
        (i as f64 - c as f64) * self.h()
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        match self.dim {
            2 => [idx / n, idx % n, 0],
            _ => [idx / (n * n), (idx / n) % n, idx % n],
        }
    }

    #[inline]
    pub fn index(&self, mi: &[usize]) -> usize {
        let s = self.strides();
        (0..self.dim).map(|a| mi[a] * s[a]).sum()
    }

    #[inline]
    pub fn node_point(&self, idx: usize) -> Point {
        let mi = self.multi_index(idx);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.coord(mi[a]);
        }
        p
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim).any(|a| mi[a] == 0 || mi[a] == self.n - 1)
    }

    pub fn center_index(&self) -> usize {
        let c = (self.n - 1) / 2;
        self.index(&[c, c, c])
    }

    /// Nearest node to `x` (clamped into the box).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let h = self.h();
        let mut mi = [0usize; 3];
        for a in 0..self.dim {
            let t = ((x[a] + self.half_width) / h).round();
            mi[a] = t.clamp(0.0, (self.n - 1) as f64) as usize;
        }
        self.index(&mi)
    }

    /// Whether the closed box `center ± r` lies inside the domain.
    pub fn contains_box(&self, center: &[f64], r: f64) -> bool {
        let tol = 1e-9 * self.h();
        (0..self.dim).all(|a| center[a] - r >= -self.half_width - tol && center[a] + r <= self.half_width + tol)
    }

    /// Nodes with `|x − center| ≤ r`, ascending.
    pub fn ball_nodes(&self, center: &[f64], r: f64) -> Vec<usize> {
        let h = self.h();
        let c = point(&center[..self.dim]);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..self.dim {
            let l = ((c[a] - r + self.half_width) / h - 1e-9).ceil().max(0.0) as usize;
            let u = (((c[a] + r + self.half_width) / h + 1e-9).floor() as isize)
                .min(self.n as isize - 1);
            if u < l as isize {
                return Vec::new();
            }
            lo[a] = l;
            hi[a] = u as usize;
        }
        let r2 = r * r * (1.0 + 1e-12) + 1e-24;
        let mut out = Vec::new();
        let (z_lo, z_hi) = if self.dim == 3 { (lo[2], hi[2]) } else { (0, 0) };
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in z_lo..=z_hi {
                    let mi = [i, j, k];
                    let mut d2 = 0.0;
                    for a in 0..self.dim {
                        d2 += (self.coord(mi[a]) - c[a]).powi(2);
                    }
                    if d2 <= r2 {
                        out.push(self.index(&mi));
                    }
                }
            }
        }
        out
    }

    /// Offsets of the `3^d − 1` neighbors of an interior node.
    pub fn neighbor_offsets(&self) -> Vec<isize> {
        let s = self.strides();
        let mut out = Vec::new();
        let range: Vec<[isize; 3]> = if self.dim == 2 {
            (-1..=1)
                .flat_map(|i| (-1..=1).map(move |j| [i, j, 0]))
                .collect()
        } else {
            (-1..=1)
                .flat_map(|i| (-1..=1).flat_map(move |j| (-1..=1).map(move |k| [i, j, k])))
                .collect()
        };
        for o in range {
            if o == [0, 0, 0] {
                continue;
            }
            out.push((0..3).map(|a| o[a] * s[a] as isize).sum());
        }
        out
    }
}

/// Values of a function at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// Result of [`ScalarField::rescale`].
#[derive(Debug, Clone)]
pub struct Rescaled {
    pub field: ScalarField,
    /// Nominal interpolation error `h⁴/r²`.
    pub interp_error: f64,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Sync + Send,
    {
        let values = par::map_range(grid.len(), |i| f(&grid.node_point(i)));
        Self { grid, values }
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(&Point, f64) -> f64 + Sync + Send,
    {
        let values = par::map_range(self.grid.len(), |i| f(&self.grid.node_point(i), self.values[i]));
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("field grids differ".into()));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn value_at_point(&self, x: &[f64]) -> f64 {
        self.values[self.grid.nearest(x)]
    }

    /// Centered-difference Hessian; exact on quadratics and cubics.
    pub fn hessian_at(&self, node: usize) -> Result<SymMatrix> {
        if node >= self.grid.len() {
            return Err(Error::OutsideDomain);
        }
        if self.grid.is_boundary(node) {
            return Err(Error::BoundaryNode(node));
        }
        Ok(self.hessian_unchecked(node))
    }

    /// [`Self::hessian_at`] for nodes known to be interior.
    #[inline]
    pub fn hessian_unchecked(&self, node: usize) -> SymMatrix {
        hessian_stencil(&self.values, &self.grid, node)
    }

    /// Centered-difference gradient at an interior node.
    pub fn gradient_at(&self, node: usize) -> Result<Vec<f64>> {
        if self.grid.is_boundary(node) {
            return Err(Error::BoundaryNode(node));
        }
        let s = self.grid.strides();
        let h = self.grid.h();
        Ok((0..self.grid.dim)
            .map(|a| (self.values[node + s[a]] - self.values[node - s[a]]) / (2.0 * h))
            .collect())
    }

    /// Hessians at every node (zero matrix on the boundary).
    pub fn hessian_field(&self) -> Vec<SymMatrix> {
        par::map_range(self.grid.len(), |i| {
            if self.grid.is_boundary(i) {
                SymMatrix::zeros(self.grid.dim)
            } else {
                self.hessian_unchecked(i)
            }
        })
    }

    /// Tensor-product cubic Lagrange interpolation.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        let g = &self.grid;
        let h = g.h();
        let tol = 1e-9 * h;
        let mut base = [0usize; 3];
        let mut w = [[0.0f64; 4]; 3];
        for a in 0..g.dim {
            let xa = x[a];
            if !(xa >= -g.half_width - tol && xa <= g.half_width + tol) {
                return Err(Error::OutsideDomain);
            }
            let s = (xa + g.half_width) / h;
            let k = (s.floor() as isize).clamp(0, g.n as isize - 2);
            let b = (k - 1).clamp(0, g.n as isize - 4) as usize;
            base[a] = b;
            let t = s - b as f64;
            w[a] = lagrange4(t);
        }
        let st = g.strides();
        let mut acc = 0.0;
        if g.dim == 2 {
            for i in 0..4 {
                let row = (base[0] + i) * st[0] + base[1];
                let mut r = 0.0;
                for j in 0..4 {
                    r += w[1][j] * self.values[row + j];
                }
                acc += w[0][i] * r;
            }
        } else {
            for i in 0..4 {
                let mut plane = 0.0;
                for j in 0..4 {
                    let row = (base[0] + i) * st[0] + (base[1] + j) * st[1] + base[2];
                    let mut r = 0.0;
                    for k in 0..4 {
                        r += w[2][k] * self.values[row + k];
                    }
                    plane += w[1][j] * r;
                }
                acc += w[0][i] * plane;
            }
        }
        Ok(acc)
    }

    /// Samples `y ↦ f(center + r·y)/r²` on `target`.
    pub fn rescale(&self, center: &[f64], r: f64, target: Grid) -> Result<Rescaled> {
        if target.dim != self.grid.dim {
            return Err(Error::DimensionMismatch {
                expected: self.grid.dim,
                got: target.dim,
            });
        }
        if !(r > 0.0) || !self.grid.contains_box(center, r * target.half_width) {
            return Err(Error::OutsideDomain);
        }
        let inv = 1.0 / (r * r);
        let d = self.grid.dim;
        let values = par::map_range(target.len(), |i| {
            let y = target.node_point(i);
            let mut x = [0.0; 3];
            for a in 0..d {
                x[a] = center[a] + r * y[a];
            }
            self.interpolate(&x[..d]).map(|v| v * inv)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let h = self.grid.h();
        Ok(Rescaled {
            field: ScalarField {
                grid: target,
                values,
            },
            interp_error: h.powi(4) * inv,
        })
    }

    /// `max |f|` over nodes in the closed ball `B_r(center)`.
    pub fn sup_norm_ball(&self, center: &[f64], r: f64) -> Result<f64> {
        let nodes = self.checked_ball(center, r)?;
        Ok(nodes.iter().fold(0.0, |m, &i| m.max(self.values[i].abs())))
    }

    /// Ball nodes, requiring the ball inside the domain and nonempty.
    pub fn checked_ball(&self, center: &[f64], r: f64) -> Result<Vec<usize>> {
        if !self.grid.contains_box(center, r) {
            return Err(Error::OutsideDomain);
        }
        let nodes = self.grid.ball_nodes(center, r);
        if nodes.is_empty() || r < self.grid.h() {
            return Err(Error::EmptyBall { radius: r });
        }
        Ok(nodes)
    }

    /// `min λ_min(D²f)` over interior nodes of `B_r(center)`.
    pub fn min_hessian_eigen_ball(&self, center: &[f64], r: f64) -> Result<f64> {
        let nodes: Vec<usize> = self
            .checked_ball(center, r)?
            .into_iter()
            .filter(|&i| !self.grid.is_boundary(i))
            .collect();
        if nodes.is_empty() {
            return Err(Error::EmptyBall { radius: r });
        }
        Ok(par::min_range(nodes.len(), |k| {
            self.hessian_unchecked(nodes[k]).lambda_min()
        }))
    }

    pub fn to_fbf1_bytes(&self) -> Vec<u8> {
        let header = format!(
            "FBF1 dim={} n={} hw={}\n",
            self.grid.dim, self.grid.n, self.grid.half_width
        );
        let mut out = Vec::with_capacity(header.len() + 8 * self.values.len());
        out.extend_from_slice(header.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_fbf1_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("FBF1 header missing newline".into()))?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| Error::Format("FBF1 header is not UTF-8".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("FBF1") {
            return Err(Error::Format("missing FBF1 magic".into()));
        }
        let (mut dim, mut n, mut hw) = (None, None, None);
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header token `{p}`")))?;
            let bad = |_| Error::Format(format!("bad value in `{p}`"));
            match k {
                "dim" => dim = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "n" => n = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "hw" => hw = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(Error::Format(format!("unknown header key `{k}`"))),
            }
        }
        let (Some(dim), Some(n), Some(hw)) = (dim, n, hw) else {
            return Err(Error::Format("FBF1 header needs dim, n, hw".into()));
        };
        let grid = Grid::new(dim, n, hw)?;
        let body = &bytes[nl + 1..];
        if body.len() != 8 * grid.len() {
            return Err(Error::Format(format!(
                "FBF1 body has {} bytes, expected {}",
                body.len(),
                8 * grid.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ScalarField::new(grid, values)
    }

    pub fn write_fbf1(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_fbf1_bytes())?;
        Ok(())
    }

    pub fn read_fbf1(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_fbf1_bytes(&fs::read(path)?)
    }
}

/// Hessian stencil on a raw value array.
#[inline]
pub fn hessian_stencil(v: &[f64], g: &Grid, i: usize) -> SymMatrix {
    let s = g.strides();
    let h = g.h();
    let ih2 = 1.0 / (h * h);
    let iq = 0.25 * ih2;
    let mut m = SymMatrix::zeros(g.dim);
    let c = v[i];
    for a in 0..g.dim {
        let sa = s[a];
        m.set(a, a, (v[i + sa] - 2.0 * c + v[i - sa]) * ih2);
        for b in a + 1..g.dim {
            let sb = s[b];
            let val = v[i + sa + sb] - v[i + sa - sb] - v[i - sa + sb] + v[i - sa - sb];
            m.set(a, b, val * iq);
        }
    }
    m
}

#[inline]
fn lagrange4(t: f64) -> [f64; 4] {
    // Nodes at 0, 1, 2, 3.
    let (t0, t1, t2, t3) = (t, t - 1.0, t - 2.0, t - 3.0);
    [
        -t1 * t2 * t3 / 6.0,
        t0 * t2 * t3 / 2.0,
        -t0 * t1 * t3 / 2.0,
        t0 * t1 * t2 / 6.0,
    ]
}
