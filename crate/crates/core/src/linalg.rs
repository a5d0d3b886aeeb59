//! Small dense symmetric matrices (d ≤ 3).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum supported matrix dimension.
pub const MAX_DIM: usize = 3;

// Packed upper triangle, row by row: (0,0) (0,1) (0,2) (1,1) (1,2) (2,2).
// Entries past the active dimension stay zero.
#[inline]
fn slot(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match (i, j) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        (2, 2) => 5,
        _ => unreachable!("index out of range"),
    }
}

/// Symmetric `dim × dim` matrix. Symmetry holds by storage.
#[derive(Clone, Copy, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: [f64; 6],
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "SymMatrix dim must be 1..=3");
        Self { dim, data: [0.0; 6] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, s);
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// `v ⊗ v`.
    pub fn outer(v: &[f64]) -> Self {
        let mut m = Self::zeros(v.len());
        for i in 0..v.len() {
            for j in i..v.len() {
                m.set(i, j, v[i] * v[j]);
            }
        }
        m
    }

    /// Builds from a row-major `dim²` list; rejects asymmetric input.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i];
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Format(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                m.set(i, j, 0.5 * (a + b));
            }
        }
        Ok(m)
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.get(i, j));
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim);
        self.data[slot(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        self.data[slot(i, j)] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product `tr(self · other)`.
    pub fn frob_dot(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for i in 0..self.dim {
            s += self.get(i, i) * other.get(i, i);
            for j in i + 1..self.dim {
                s += 2.0 * self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_dot(self).sqrt()
    }

    /// Spectral norm (largest |λ|).
    pub fn spectral_norm(&self) -> f64 {
        let ev = self.eigenvalues();
        ev[0].abs().max(ev[self.dim - 1].abs())
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += x[i] * self.get(i, j) * x[j];
            }
        }
        s
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for v in m.data.iter_mut() {
            *v *= s;
        }
        m
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Eigenvalues sorted descending, with unit eigenvectors (column `k` of
    /// the returned list pairs with eigenvalue `k`).
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (vals, vecs): (Vec<f64>, Vec<Vec<f64>>) = match self.dim {
            1 => (vec![self.get(0, 0)], vec![vec![1.0]]),
            2 => {
                let m = Matrix2::new(
                    self.get(0, 0),
                    self.get(0, 1),
                    self.get(1, 0),
                    self.get(1, 1),
                );
                let e = SymmetricEigen::new(m);
                (
                    e.eigenvalues.iter().copied().collect(),
                    (0..2)
                        .map(|k| e.eigenvectors.column(k).iter().copied().collect())
                        .collect(),
                )
            }
            _ => {
                let m = Matrix3::from_fn(|i, j| self.get(i, j));
                let e = SymmetricEigen::new(m);
                (
                    e.eigenvalues.iter().copied().collect(),
                    (0..3)
                        .map(|k| e.eigenvectors.column(k).iter().copied().collect())
                        .collect(),
                )
            }
        };
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        (
            order.iter().map(|&k| vals[k]).collect(),
            order.iter().map(|&k| vecs[k].clone()).collect(),
        )
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![self.get(0, 0)],
            2 => {
                let (a, b, c) = (self.get(0, 0), self.get(0, 1), self.get(1, 1));
                let m = 0.5 * (a + c);
                let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                vec![m + r, m - r]
            }
            _ => self.eigen().0,
        }
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Rebuilds `Σ f(λ_k) v_k ⊗ v_k`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigen();
        let mut out = Self::zeros(self.dim);
        for (lam, v) in vals.iter().zip(&vecs) {
            out = out + Self::outer(v).scale(f(*lam));
        }
        out
    }

    /// Positive part `M⁺`.
    pub fn positive_part(&self) -> Self {
        self.map_spectrum(|l| l.max(0.0))
    }

    /// `Rᵀ M R` for a row-major `d × d` matrix `R`.
    pub fn congruence(&self, r: &[f64]) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        s += r[k * d + i] * self.get(k, l) * r[l * d + j];
                    }
                }
                out.set(i, j, s);
            }
        }
        out
    }
}

impl Add for SymMatrix {
    type Output = SymMatrix;
    fn add(mut self, rhs: SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data) {
            *a += b;
        }
        self
    }
}

impl Sub for SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: SymMatrix) -> SymMatrix {
        self + (-rhs)
    }
}

impl Neg for SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.scale(-1.0)
    }
}

impl Mul<f64> for SymMatrix {
    type Output = SymMatrix;
    fn mul(self, s: f64) -> SymMatrix {
        self.scale(s)
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect();
        write!(f, "SymMatrix{rows:?}")
    }
}

#[derive(Serialize, Deserialize)]
struct SymMatrixRepr {
    dim: usize,
    entries: Vec<f64>,
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SymMatrixRepr {
            dim: self.dim,
            entries: self.to_row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SymMatrixRepr::deserialize(d)?;
        SymMatrix::from_row_major(r.dim, &r.entries).map_err(serde::de::Error::custom)
    }
}

/// Solves the small dense SPD system `a x = b` by Cholesky; `None` if `a` is
/// not numerically positive definite.
pub fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    let chol = m.cholesky()?;
    let l = chol.l();
    let dmax = (0..n).map(|i| l[(i, i)]).fold(0.0, f64::max);
    let dmin = (0..n).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(dmin > 1e-7 * dmax) {
        return None;
    }
    let x = chol.solve(&nalgebra::DVector::from_column_slice(b));
    Some(x.iter().copied().collect())
}
