//! Linearized `3^d`-point stencil operators and a preconditioned BiCGStab.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::SymMatrix;
use crate::par;

/// Multi-offsets in `{−1,0,1}^d`, lexicographic, center included.
fn multi_offsets(dim: usize) -> Vec<[isize; 3]> {
    let mut out = Vec::new();
    if dim == 2 {
        for i in -1..=1 {
            for j in -1..=1 {
                out.push([i, j, 0]);
            }
        }
    } else {
        for i in -1..=1 {
            for j in -1..=1 {
                for k in -1..=1 {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// Parity color of a node; nodes of one color never share a stencil.
#[inline]
pub fn color_of(grid: &Grid, idx: usize) -> usize {
    let mi = grid.multi_index(idx);
    (0..grid.dim).map(|a| (mi[a] & 1) << a).sum()
}

/// Free nodes grouped by parity color, ascending within each color.
pub fn colored(grid: &Grid, free: &[bool]) -> Vec<Vec<usize>> {
    let mut colors = vec![Vec::new(); 1 << grid.dim];
    for (i, &f) in free.iter().enumerate() {
        if f {
            colors[color_of(grid, i)].push(i);
        }
    }
    colors
}

/// Row-wise stencil matrix. Rows of non-free nodes are the identity.
pub struct StencilMatrix {
    n: usize,
    offsets: Vec<isize>,
    center: usize,
    coef: Vec<f64>,
    free: Vec<bool>,
    colors: Vec<Vec<usize>>,
}

impl StencilMatrix {
    /// Linearization `v ↦ C_i : H_i v + extra_diag_i v_i` at each free node,
    /// with couplings into non-free nodes dropped.
    pub fn from_coefficients(
        grid: &Grid,
        free: &[bool],
        coeffs: &[SymMatrix],
        extra_diag: &[f64],
    ) -> Self {
        let mo = multi_offsets(grid.dim);
        let k = mo.len();
        let center = k / 2;
        let st = grid.strides();
        let offsets: Vec<isize> = mo
            .iter()
            .map(|o| (0..3).map(|a| o[a] * st[a] as isize).sum())
            .collect();
        let h2 = grid.h() * grid.h();
        let rows = par::map_range(grid.len(), |i| {
            let mut row = vec![0.0; k];
            if !free[i] {
                row[center] = 1.0;
                return row;
            }
            let c = &coeffs[i];
            for (slot, o) in mo.iter().enumerate() {
                let nz: Vec<usize> = (0..grid.dim).filter(|&a| o[a] != 0).collect();
                let v = match nz.len() {
                    0 => -2.0 * c.trace() / h2 + extra_diag[i],
                    1 => c.get(nz[0], nz[0]) / h2,
                    2 => (o[nz[0]] * o[nz[1]]) as f64 * c.get(nz[0], nz[1]) / (2.0 * h2),
                    _ => 0.0,
                };
                if nz.is_empty() {
                    row[slot] = v;
                } else {
                    let j = (i as isize + offsets[slot]) as usize;
                    row[slot] = if free[j] { v } else { 0.0 };
                }
            }
            row
        });
        let coef = rows.into_iter().flatten().collect();
        Self {
            n: grid.len(),
            offsets,
            center,
            coef,
            free: free.to_vec(),
            colors: colored(grid, free),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let k = self.offsets.len();
        let row = &self.coef[i * k..(i + 1) * k];
        let mut s = 0.0;
        for (c, &o) in row.iter().zip(&self.offsets) {
            if *c != 0.0 {
                s += c * x[(i as isize + o) as usize];
            }
        }
        s
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        par::map_range(self.n, |i| if self.free[i] { self.row_dot(i, x) } else { x[i] })
    }

    /// One symmetric multicolor Gauss–Seidel pass from zero: `z ≈ A⁻¹ r`.
    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let k = self.offsets.len();
        let mut z: Vec<f64> = (0..self.n).map(|i| if self.free[i] { 0.0 } else { r[i] }).collect();
        let order: Vec<usize> = (0..self.colors.len()).chain((0..self.colors.len()).rev()).collect();
        for c in order {
            let nodes = &self.colors[c];
            let zr = &z;
            let upd = par::map_slice(nodes, |&i| {
                let diag = self.coef[i * k + self.center];
                let off = self.row_dot(i, zr) - diag * zr[i];
                (r[i] - off) / diag
            });
            for (&i, v) in nodes.iter().zip(upd) {
                z[i] = v;
            }
        }
        z
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    par::sum_range(a.len(), |i| a[i] * b[i])
}

/// Right-preconditioned BiCGStab for `A x = b`, starting from zero. Stops at
/// `‖r‖₂ ≤ rel_tol·‖b‖₂`.
pub fn bicgstab(a: &StencilMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let target = rel_tol * bnorm;
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            // Shadow residual became orthogonal; restart from the current residual.
            r_hat = r.clone();
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = a.precondition(&p);
        v = a.apply(&p_hat);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(Error::NonConvergence("BiCGStab breakdown (r̂·v = 0)".into()));
        }
        alpha = rho / denom;
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        if dot(&s, &s).sqrt() <= target {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok((x, it));
        }
        let s_hat = a.precondition(&s);
        let t = a.apply(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = dot(&r, &r).sqrt();
        if !rn.is_finite() {
            return Err(Error::NonConvergence("BiCGStab produced non-finite residual".into()));
        }
        if rn <= target {
            return Ok((x, it));
        }
        if omega == 0.0 {
            return Err(Error::NonConvergence("BiCGStab breakdown (ω = 0)".into()));
        }
    }
    Err(Error::NonConvergence(format!(
        "BiCGStab did not reach relative tolerance {rel_tol:.1e} in {max_iter} iterations"
    )))
}
