//! Builtin analytic fixtures: half-space solutions, quadratic class members,
//! perturbed singular data and homogeneous thin-obstacle solutions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linalg::SymMatrix;
use crate::operator::{EllipticOperator, GammaDirection};

#[derive(Debug, Clone, PartialEq)]
pub enum Fixture {
    /// `½γ (x₁⁺)²` with `F(γ e₁⊗e₁) = 1`.
    HalfSpace { gamma: f64 },
    /// `½γ x₁²`, the top-stratum quadratic.
    TopStratum { gamma: f64 },
    /// `½ x·A x` with `A ≥ 0`, `F(A) = 1`.
    Quadratic { a: SymMatrix },
    Zero,
    /// `½ x·A x + η (x₁³ − 3x₁x₂²)`; boundary data with an isolated contact point.
    Stratum0Perturbed { a: SymMatrix, eta: f64 },
    /// `½γ x₁² + δ Re (x₁ + i x₂)⁴`, nonnegative for `δ < γ/12` on the unit box.
    TopQuartic { gamma: f64, delta: f64 },
    /// `½ x·A x + η w(x)` with `w = e^{x₁}cos x₂ − 1 − x₁ − (x₁² − x₂²)/2 − (x₁³ − 3x₁x₂²)/6`,
    /// harmonic and vanishing to fourth order at 0.
    Manufactured { a: SymMatrix, eta: f64 },
    /// `−x₁`.
    ThinLinear,
    /// `Re (x₂ + i|x₁|)^{3/2}`.
    ThinThreeHalf,
    /// `x₁ x₂`.
    ThinX1X2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureInfo {
    pub name: &'static str,
    pub dims: &'static str,
    pub formula: &'static str,
    pub realizes: &'static str,
}

pub fn list_fixtures() -> Vec<FixtureInfo> {
    vec![
        FixtureInfo {
            name: "halfspace",
            dims: "2,3",
            formula: "½γ max(x₁,0)², F(γ e₁⊗e₁) = 1",
            realizes: "half-space solution (regular free-boundary point)",
        },
        FixtureInfo {
            name: "top-stratum",
            dims: "2,3",
            formula: "½γ x₁², F(γ e₁⊗e₁) = 1",
            realizes: "quadratic class Q member with (d−1)-dimensional kernel",
        },
        FixtureInfo {
            name: "quadratic:<spec>",
            dims: "2,3",
            formula: "½ x·A x; `iso` gives A = γI, `a1,a2[,a3]` gives A ∝ diag(a) normalized to F(A) = 1",
            realizes: "quadratic class Q member",
        },
        FixtureInfo {
            name: "zero",
            dims: "2,3",
            formula: "0",
            realizes: "trivial solution (full contact)",
        },
        FixtureInfo {
            name: "stratum0",
            dims: "2,3",
            formula: "½ x·A x + η (x₁³ − 3x₁x₂²), A = diag(1, 0.6[, 0.8]) normalized, η = 0.05",
            realizes: "boundary data with an interior singular point of stratum 0",
        },
        FixtureInfo {
            name: "top-quartic",
            dims: "2,3",
            formula: "½γ x₁² + δ Re (x₁ + i x₂)⁴, δ = γ/40",
            realizes: "top-stratum data perturbed at fourth order",
        },
        FixtureInfo {
            name: "manufactured",
            dims: "2,3",
            formula: "½ x·A x + η (e^{x₁}cos x₂ − 1 − x₁ − (x₁²−x₂²)/2 − (x₁³−3x₁x₂²)/6), η = 0.1",
            realizes: "smooth exact solution for the trace operator (isolated contact at 0)",
        },
        FixtureInfo {
            name: "thin:linear",
            dims: "2",
            formula: "−x₁",
            realizes: "thin-obstacle solution of frequency 1",
        },
        FixtureInfo {
            name: "thin:threehalf",
            dims: "2",
            formula: "Re (x₂ + i|x₁|)^{3/2}",
            realizes: "thin-obstacle solution of frequency 3/2",
        },
        FixtureInfo {
            name: "thin:x1x2",
            dims: "2",
            formula: "x₁ x₂",
            realizes: "thin-obstacle solution of frequency 2",
        },
    ]
}

/// `A = s·diag(raw)` with `F(A) = 1`.
pub fn normalized_diag(op: &EllipticOperator, raw: &[f64]) -> Result<SymMatrix> {
    if raw.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: raw.len(),
        });
    }
    if raw.iter().any(|&a| a < 0.0) || raw.iter().all(|&a| a == 0.0) {
        return Err(Error::Precondition("quadratic entries must be ≥ 0, not all zero".into()));
    }
    normalized(op, &SymMatrix::diag(raw))
}

/// `s·m` with `F(s·m) = 1` for `m ≥ 0`, `m ≠ 0`.
pub fn normalized(op: &EllipticOperator, m: &SymMatrix) -> Result<SymMatrix> {
    let norm = m.spectral_norm();
    let l = op.lambda();
    let s = op.solve_scale(m, 1.0, 0.25 / (l * norm), 4.0 * l / norm)?;
    Ok(m.scale(s))
}

impl Fixture {
    /// Resolves a builtin name for the given operator.
    pub fn from_name(name: &str, op: &EllipticOperator) -> Result<Self> {
        let d = op.dim();
        let gamma1 = || {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            op.gamma_of(&GammaDirection::Along(e))
        };
        let thin_only = |f: Fixture| {
            if d == 2 {
                Ok(f)
            } else {
                Err(Error::UnsupportedDimension(d))
            }
        };
        match name {
            "halfspace" => Ok(Fixture::HalfSpace { gamma: gamma1()? }),
            "top-stratum" => Ok(Fixture::TopStratum { gamma: gamma1()? }),
            "zero" => Ok(Fixture::Zero),
            "stratum0" => {
                let raw = if d == 2 { vec![1.0, 0.6] } else { vec![1.0, 0.6, 0.8] };
                Ok(Fixture::Stratum0Perturbed {
                    a: normalized_diag(op, &raw)?,
                    eta: 0.05,
                })
            }
            "top-quartic" => {
                let gamma = gamma1()?;
                Ok(Fixture::TopQuartic {
                    gamma,
                    delta: gamma / 40.0,
                })
            }
            "manufactured" => {
                let raw = if d == 2 { vec![1.0, 0.7] } else { vec![1.0, 0.7, 0.8] };
                Ok(Fixture::Manufactured {
                    a: normalized_diag(op, &raw)?,
                    eta: 0.1,
                })
            }
            "thin:linear" => thin_only(Fixture::ThinLinear),
            "thin:threehalf" => thin_only(Fixture::ThinThreeHalf),
            "thin:x1x2" => thin_only(Fixture::ThinX1X2),
            _ => {
                if let Some(spec) = name.strip_prefix("quadratic:") {
                    let a = if spec == "iso" {
                        SymMatrix::scaled_identity(d, op.gamma_of(&GammaDirection::Isotropic)?)
                    } else {
                        let raw = spec
                            .split(',')
                            .map(|t| t.trim().parse::<f64>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| Error::Format(format!("bad quadratic spec `{spec}`: {e}")))?;
                        normalized_diag(op, &raw)?
                    };
                    Ok(Fixture::Quadratic { a })
                } else {
                    Err(Error::Format(format!("unknown fixture `{name}`")))
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Fixture::HalfSpace { gamma } => 0.5 * gamma * x[0].max(0.0).powi(2),
            Fixture::TopStratum { gamma } => 0.5 * gamma * x[0] * x[0],
            Fixture::Quadratic { a } => 0.5 * a.quad_form(&x[..a.dim()]),
            Fixture::Zero => 0.0,
            Fixture::Stratum0Perturbed { a, eta } => {
                0.5 * a.quad_form(&x[..a.dim()]) + eta * (x[0].powi(3) - 3.0 * x[0] * x[1] * x[1])
            }
            Fixture::TopQuartic { gamma, delta } => {
                let (a, b) = (x[0], x[1]);
                0.5 * gamma * a * a + delta * (a.powi(4) - 6.0 * a * a * b * b + b.powi(4))
            }
            Fixture::Manufactured { a, eta } => 0.5 * a.quad_form(&x[..a.dim()]) + eta * harmonic_tail(x[0], x[1]),
            Fixture::ThinLinear => -x[0],
            Fixture::ThinThreeHalf => three_half(x[0], x[1]),
            Fixture::ThinX1X2 => x[0] * x[1],
        }
    }

    pub fn field(&self, grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.eval(&x[..grid.dim]))
    }

    /// Hessian at the origin where the fixture is `C²` there.
    pub fn hessian_at_origin(&self, dim: usize) -> Option<SymMatrix> {
        match self {
            Fixture::TopStratum { gamma } | Fixture::TopQuartic { gamma, .. } => {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                Some(SymMatrix::outer(&e).scale(*gamma))
            }
            Fixture::Quadratic { a }
            | Fixture::Stratum0Perturbed { a, .. }
            | Fixture::Manufactured { a, .. } => Some(*a),
            Fixture::Zero => Some(SymMatrix::zeros(dim)),
            _ => None,
        }
    }
}

/// `e^{x}cos y − 1 − x − (x² − y²)/2 − (x³ − 3xy²)/6`.
pub fn harmonic_tail(x: f64, y: f64) -> f64 {
    x.exp() * y.cos() - 1.0 - x - 0.5 * (x * x - y * y) - (x.powi(3) - 3.0 * x * y * y) / 6.0
}

/// `Re (x₂ + i|x₁|)^{3/2}` via polar form.
pub fn three_half(x1: f64, x2: f64) -> f64 {
    let r = (x1 * x1 + x2 * x2).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    let theta = x1.abs().atan2(x2); // in [0, π]
    r.powf(1.5) * (1.5 * theta).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_and_origin_values() {
        let names: Vec<&str> = list_fixtures().iter().map(|f| f.name).collect();
        for n in ["halfspace", "quadratic:<spec>", "thin:threehalf"] {
            assert!(names.contains(&n));
        }
        let op = EllipticOperator::trace(2);
        for name in [
            "halfspace",
            "top-stratum",
            "quadratic:iso",
            "quadratic:1,0.5",
            "zero",
            "stratum0",
            "top-quartic",
            "manufactured",
            "thin:linear",
            "thin:threehalf",
            "thin:x1x2",
        ] {
            assert_eq!(Fixture::from_name(name, &op).unwrap().eval(&[0.0, 0.0]), 0.0, "{name}");
        }
    }

    #[test]
    fn iso_quadratic_for_trace() {
        let op = EllipticOperator::trace(2);
        let Fixture::Quadratic { a } = Fixture::from_name("quadratic:iso", &op).unwrap() else {
            panic!()
        };
        assert!(a.max_abs_diff(&SymMatrix::scaled_identity(2, 0.5)) < 1e-12);
        let Fixture::Quadratic { a } = Fixture::from_name("quadratic:2,1", &op).unwrap() else {
            panic!()
        };
        assert!((op.evaluate(&a).unwrap() - 1.0).abs() < 1e-12);
        assert!((a.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn thin_fixture_formulas() {
        // (x₂ + i|x₁|)^{3/2} at x = (0, 4): 4^{3/2} = 8; at (0, −4): 8·cos(3π/2) = 0.
        assert!((three_half(0.0, 4.0) - 8.0).abs() < 1e-12);
        assert!(three_half(0.0, -4.0).abs() < 1e-12);
        assert!(three_half(0.7, -0.2) == three_half(-0.7, -0.2));
        // Harmonic away from the line: five-point Laplacian is O(h²).
        let h = 1e-3;
        let (x, y) = (0.3, -0.4);
        let lap = (three_half(x + h, y) + three_half(x - h, y) + three_half(x, y + h)
            + three_half(x, y - h)
            - 4.0 * three_half(x, y))
            / (h * h);
        assert!(lap.abs() < 1e-4);
        // The tail is harmonic and O(|x|⁴).
        let lap = (harmonic_tail(x + h, y) + harmonic_tail(x - h, y) + harmonic_tail(x, y + h)
            + harmonic_tail(x, y - h)
            - 4.0 * harmonic_tail(x, y))
            / (h * h);
        assert!(lap.abs() < 1e-5);
        assert!(harmonic_tail(1e-2, 1e-2).abs() < 1e-7);
    }

    #[test]
    fn top_quartic_nonnegative() {
        let op = EllipticOperator::trace(2);
        let f = Fixture::from_name("top-quartic", &op).unwrap();
        let g = Grid::new(2, 65, 1.0).unwrap();
        assert!(f.field(g).values.iter().all(|&v| v >= 0.0));
    }
}
