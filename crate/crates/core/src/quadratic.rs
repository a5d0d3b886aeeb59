//! The polynomial classes `Q` and `UQ`, least-squares quadratic fits, and
//! projection of near-solutions onto `{F(A) = 1, A ≥ 0}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::linalg::{cholesky_solve, SymMatrix};
use crate::operator::EllipticOperator;
use crate::par;

pub const TOL_PSD: f64 = 1e-10;
pub const TOL_F: f64 = 1e-10;
/// Spectral distance to the PSD cone accepted by [`project_to_class`].
pub const MAX_PROJECTION_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassTag {
    Q,
    UQ,
    None,
}

/// `p(x) = ½ x·Ax + b·x + c`. Tagged polynomials have `c = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRecord", into = "PolyRecord")]
pub struct QuadraticPoly {
    pub a: SymMatrix,
    pub b: Vec<f64>,
    pub c: f64,
    pub tag: ClassTag,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyRecord {
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    #[serde(default)]
    c: f64,
    tag: ClassTag,
}

impl From<QuadraticPoly> for PolyRecord {
    fn from(p: QuadraticPoly) -> Self {
        PolyRecord {
            dim: p.dim(),
            a: p.a.to_row_major(),
            b: p.b,
            c: p.c,
            tag: p.tag,
        }
    }
}

impl TryFrom<PolyRecord> for QuadraticPoly {
    type Error = Error;

    fn try_from(r: PolyRecord) -> Result<Self> {
        let a = SymMatrix::from_row_major(r.dim, &r.a)?;
        if r.b.len() != r.dim {
            return Err(Error::DimensionMismatch {
                expected: r.dim,
                got: r.b.len(),
            });
        }
        Ok(QuadraticPoly {
            a,
            b: r.b,
            c: r.c,
            tag: r.tag,
        })
    }
}

impl QuadraticPoly {
    pub fn new(a: SymMatrix, b: Vec<f64>, c: f64) -> Result<Self> {
        if b.len() != a.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.dim(),
                got: b.len(),
            });
        }
        Ok(QuadraticPoly {
            a,
            b,
            c,
            tag: ClassTag::None,
        })
    }

    /// `½ x·Ax`, untagged.
    pub fn homogeneous(a: SymMatrix) -> Self {
        let d = a.dim();
        QuadraticPoly {
            a,
            b: vec![0.0; d],
            c: 0.0,
            tag: ClassTag::None,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.b.iter().zip(x).map(|(b, x)| b * x).sum();
        0.5 * self.a.quad_form(x) + lin + self.c
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.a
            .mul_vec(x)
            .into_iter()
            .zip(&self.b)
            .map(|(ax, b)| ax + b)
            .collect()
    }

    /// Checks the class invariants for the carried tag.
    pub fn validate(&self, op: &EllipticOperator) -> Result<()> {
        if self.tag == ClassTag::None {
            return Ok(());
        }
        if self.dim() != op.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                got: self.dim(),
            });
        }
        let lmin = self.a.lambda_min();
        let f = op.eval_unchecked(&self.a);
        if lmin < -TOL_PSD || (f - 1.0).abs() > TOL_F || self.c != 0.0 {
            return Err(Error::Precondition(format!(
                "not in class {:?}: λ_min = {lmin:.3e}, F(A) − 1 = {:.3e}",
                self.tag,
                f - 1.0
            )));
        }
        if self.tag == ClassTag::Q && self.b.iter().any(|&v| v != 0.0) {
            return Err(Error::Precondition("class Q requires b = 0".into()));
        }
        Ok(())
    }

    /// Second eigenvalue of `A` (descending order); `0` in `d = 1`.
    pub fn lambda2(&self) -> f64 {
        self.a.eigenvalues().get(1).copied().unwrap_or(0.0)
    }
}

/// Number of monomials in the fit basis.
fn basis_len(d: usize, constant: bool) -> usize {
    d * (d + 1) / 2 + d + usize::from(constant)
}

/// Fills `out` with the basis at scaled offset `z`: `z_i z_j (i ≤ j)`, `z_i`, `1`.
fn basis(z: &[f64], constant: bool, out: &mut [f64]) {
    let d = z.len();
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            out[k] = z[i] * z[j];
            k += 1;
        }
    }
    for &zi in z {
        out[k] = zi;
        k += 1;
    }
    if constant {
        out[k] = 1.0;
    }
}

/// Least-squares fit of `½ y·Ay + b·y (+ c)` in `y = x − center` over the
/// nodes of `B_r(center)`. Returns an untagged polynomial in `y`.
pub fn fit_quadratic(u: &ScalarField, center: &[f64], r: f64, constrain_origin: bool) -> Result<QuadraticPoly> {
    let g = &u.grid;
    let d = g.dim;
    let nodes = u.checked_ball(center, r)?;
    let constant = !constrain_origin;
    let m = basis_len(d, constant);
    if r < 4.0 * g.h() || nodes.len() < 2 * m {
        return Err(Error::RankDeficient(nodes.len()));
    }
    // Normal equations in z = y/r, then unscaled.
    let width = m * m + m;
    let sums = par::sum_vec_range(nodes.len(), width, |k, acc| {
        let x = g.node_point(nodes[k]);
        let mut z = [0.0; 3];
        for a in 0..d {
            z[a] = (x[a] - center[a]) / r;
        }
        let mut phi = [0.0; 10];
        basis(&z[..d], constant, &mut phi[..m]);
        let v = u.values[nodes[k]];
        for i in 0..m {
            for j in 0..m {
                acc[i * m + j] += phi[i] * phi[j];
            }
            acc[m * m + i] += phi[i] * v;
        }
    });
    let coef = cholesky_solve(&sums[..m * m], &sums[m * m..], m).ok_or(Error::RankDeficient(nodes.len()))?;

    let r2 = r * r;
    let mut a = SymMatrix::zeros(d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let v = if i == j { 2.0 * coef[k] } else { coef[k] };
            a.set(i, j, v / r2);
            k += 1;
        }
    }
    let b: Vec<f64> = coef[k..k + d].iter().map(|c| c / r).collect();
    let c = if constant { coef[k + d] } else { 0.0 };
    QuadraticPoly::new(a, b, c)
}

/// Positive part `M⁺` scaled by `s ∈ [0.5, 2]` so that `F(s·M⁺) = 1`.
/// `b` is kept for `UQ` and zeroed for `Q`.
pub fn project_to_class(m: &SymMatrix, b: &[f64], op: &EllipticOperator, target: ClassTag) -> Result<QuadraticPoly> {
    if target == ClassTag::None {
        return Err(Error::Untagged);
    }
    if m.dim() != op.dim() || b.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: m.dim(),
        });
    }
    let neg = (-m.lambda_min()).max(0.0);
    if !m.is_finite() || neg > MAX_PROJECTION_DISTANCE {
        return Err(Error::TooFar(format!("negative part of spectral size {neg:.3e}")));
    }
    // Within tol_psd of the cone the matrix is kept, so the map is idempotent.
    let plus = if neg <= TOL_PSD { *m } else { m.positive_part() };
    let s = if (op.eval_unchecked(&plus) - 1.0).abs() <= 1e-12 {
        1.0
    } else {
        op.solve_scale(&plus, 1.0, 0.5, 2.0)?
    };
    let b = match target {
        ClassTag::UQ => b.to_vec(),
        _ => vec![0.0; b.len()],
    };
    Ok(QuadraticPoly {
        a: plus.scale(s),
        b,
        c: 0.0,
        tag: target,
    })
}

/// Numerical witness of `u ∈ S(p, ε, r)` around a center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxCertificate {
    pub p: QuadraticPoly,
    pub eps: f64,
    pub r: f64,
    /// `min λ_min(D²u)` over interior nodes of `B_r`.
    pub convexity_floor: f64,
    pub c0: f64,
    /// Both membership conditions hold with the measured `eps` and no slack.
    pub member: bool,
}

impl ApproxCertificate {
    /// Membership in `S(p, eps, r)` with an additive slack on the Hessian bound.
    pub fn member_at(&self, eps: f64, slack: f64) -> bool {
        self.eps <= eps && self.convexity_floor >= -self.c0 * eps - slack
    }
}

/// `eps = sup_{B_r} |u − p(· − center)| / r²` and the convexity floor.
pub fn certify(
    u: &ScalarField,
    p: &QuadraticPoly,
    center: &[f64],
    r: f64,
    op: &EllipticOperator,
) -> Result<ApproxCertificate> {
    if p.tag == ClassTag::None {
        return Err(Error::Untagged);
    }
    let g = &u.grid;
    let d = g.dim;
    if p.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.dim(),
        });
    }
    let nodes = u.checked_ball(center, r)?;
    let sup = par::max_range(nodes.len(), |k| {
        let x = g.node_point(nodes[k]);
        let mut y = [0.0; 3];
        for a in 0..d {
            y[a] = x[a] - center[a];
        }
        (u.values[nodes[k]] - p.eval(&y[..d])).abs()
    });
    let floor = u.min_hessian_eigen_ball(center, r)?;
    let eps = sup / (r * r);
    let c0 = op.c0();
    Ok(ApproxCertificate {
        p: p.clone(),
        eps,
        r,
        convexity_floor: floor,
        c0,
        member: floor >= -c0 * eps,
    })
}

/// `|b_j| ≤ sqrt(2 a_j ε)` for every eigenpair of `A` with `a_j ≥ 2ε`.
pub fn linear_bound_check(p: &QuadraticPoly, eps: f64) -> Result<bool> {
    if p.tag == ClassTag::None {
        return Err(Error::Untagged);
    }
    let (vals, vecs) = p.a.eigen();
    Ok(vals.iter().zip(&vecs).all(|(&a, v)| {
        if a < 2.0 * eps {
            return true;
        }
        let bj: f64 = v.iter().zip(&p.b).map(|(v, b)| v * b).sum();
        bj.abs() <= (2.0 * a * eps).sqrt() * (1.0 + 1e-12)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn fit_recovers_quadratic() {
        let g = Grid::new(2, 33, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |x| 0.7 * x[0] * x[0] - 0.2 * x[0] * x[1] + 0.1 * x[1] * x[1] + 0.3 * x[1] - 0.05);
        let p = fit_quadratic(&u, &[0.0, 0.0], 0.5, false).unwrap();
        let want = SymMatrix::from_row_major(2, &[1.4, -0.2, -0.2, 0.2]).unwrap();
        assert!(p.a.max_abs_diff(&want) < 1e-10);
        assert!((p.b[0]).abs() < 1e-10 && (p.b[1] - 0.3).abs() < 1e-10);
        assert!((p.c + 0.05).abs() < 1e-10);
    }

    #[test]
    fn fit_rejects_tiny_balls() {
        let g = Grid::new(2, 33, 1.0).unwrap();
        let u = ScalarField::zeros(g);
        assert!(matches!(
            fit_quadratic(&u, &[0.0, 0.0], 2.0 * g.h(), true),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn projection_closed_forms() {
        let op = EllipticOperator::trace(2);
        let p = project_to_class(&SymMatrix::diag(&[1.1, -0.05]), &[0.0, 0.0], &op, ClassTag::Q).unwrap();
        assert!(p.a.max_abs_diff(&SymMatrix::diag(&[1.0, 0.0])) < 1e-12);
        let a0 = SymMatrix::diag(&[0.5, 0.5]);
        let p = project_to_class(&a0.scale(2.0), &[0.0, 0.0], &op, ClassTag::Q).unwrap();
        assert!(p.a.max_abs_diff(&a0) < 1e-12);
        let p = project_to_class(&a0, &[0.1, 0.0], &op, ClassTag::UQ).unwrap();
        assert_eq!(p.a, a0);
        assert_eq!(p.b, vec![0.1, 0.0]);
        assert!(project_to_class(&SymMatrix::diag(&[1.0, -0.5]), &[0.0, 0.0], &op, ClassTag::Q).is_err());
        assert!(matches!(
            project_to_class(&SymMatrix::diag(&[0.1, 0.0]), &[0.0, 0.0], &op, ClassTag::Q),
            Err(Error::Bracket(_))
        ));
    }

    #[test]
    fn linear_bound_arithmetic() {
        let mut p = QuadraticPoly::homogeneous(SymMatrix::diag(&[1.0, 0.0]));
        p.tag = ClassTag::UQ;
        assert!(linear_bound_check(&p, 0.01).unwrap());
        p.b = vec![0.2, 0.0];
        assert!(!linear_bound_check(&p, 0.01).unwrap());
        p.b = vec![0.1, 0.0];
        assert!(linear_bound_check(&p, 0.01).unwrap());
        p.tag = ClassTag::None;
        assert!(linear_bound_check(&p, 0.01).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let p = QuadraticPoly {
            a: SymMatrix::diag(&[1.0, 0.0]),
            b: vec![0.5, -0.25],
            c: 0.0,
            tag: ClassTag::UQ,
        };
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"dim\":2"));
        let back: QuadraticPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
