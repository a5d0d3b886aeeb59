//! Convex uniformly elliptic operators `F` on symmetric matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Gradient-Hölder data `(α_F, C_F)`. Recorded, not certified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Holder {
    pub alpha: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// `F(M) = c·tr(M)`.
    ScaledTrace { scale: f64 },
    /// `F(M) = τ·log Σ exp(tr(A_i M)/τ) − τ·log n`.
    SmoothedBellman { coefficients: Vec<SymMatrix>, tau: f64 },
    /// Maximal Pucci operator with parameter `Λp`.
    PucciMax { lambda: f64 },
    /// Minimal Pucci operator with parameter `Λp`.
    PucciMin { lambda: f64 },
}

impl OperatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::ScaledTrace { .. } => "scaled-trace",
            OperatorKind::SmoothedBellman { .. } => "smoothed-bellman",
            OperatorKind::PucciMax { .. } => "pucci-max",
            OperatorKind::PucciMin { .. } => "pucci-min",
        }
    }
}

/// Direction argument of [`EllipticOperator::gamma_of`].
#[derive(Debug, Clone, PartialEq)]
pub enum GammaDirection {
    Isotropic,
    Along(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    dim: usize,
    kind: OperatorKind,
    lambda: f64,
    holder: Option<Holder>,
}

impl EllipticOperator {
    /// Builds an operator and computes the tightest ellipticity constant `Λ`
    /// for which `‖P‖/Λ ≤ F(M+P) − F(M) ≤ Λ‖P‖` holds (spectral norm, P ≥ 0).
    pub fn new(dim: usize, kind: OperatorKind) -> Result<Self> {
        if !(1..=crate::linalg::MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let (lambda, holder) = match &kind {
            OperatorKind::ScaledTrace { scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidOperator(format!("trace scale {scale} must be > 0")));
                }
                (
                    (1.0 / scale).max(scale * dim as f64).max(1.0),
                    Some(Holder { alpha: 1.0, c: 0.0 }),
                )
            }
            OperatorKind::SmoothedBellman { coefficients, tau } => {
                if coefficients.is_empty() {
                    return Err(Error::InvalidOperator("bellman needs ≥1 coefficient".into()));
                }
                if !(*tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidOperator(format!("temperature {tau} must be > 0")));
                }
                let mut min_eig = f64::INFINITY;
                let mut max_tr: f64 = 0.0;
                let mut max_norm: f64 = 0.0;
                for a in coefficients {
                    if a.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: a.dim(),
                        });
                    }
                    let ev = a.eigenvalues();
                    min_eig = min_eig.min(*ev.last().unwrap());
                    max_tr = max_tr.max(a.trace());
                    max_norm = max_norm.max(ev[0]);
                }
                // Uniform ellipticity needs every A_i strictly positive definite.
                if min_eig <= 0.0 {
                    return Err(Error::InvalidOperator(format!(
                        "bellman coefficients must be positive definite (min eigenvalue {min_eig})"
                    )));
                }
                (
                    (1.0 / min_eig).max(max_tr).max(1.0),
                    Some(Holder {
                        alpha: 1.0,
                        c: max_norm * max_norm / tau,
                    }),
                )
            }
            OperatorKind::PucciMax { lambda } | OperatorKind::PucciMin { lambda } => {
                if !(*lambda >= 1.0 && lambda.is_finite()) {
                    return Err(Error::InvalidOperator(format!("pucci Λ {lambda} must be ≥ 1")));
                }
                (lambda * dim as f64, None)
            }
        };
        Ok(Self {
            dim,
            kind,
            lambda,
            holder,
        })
    }

    pub fn trace(dim: usize) -> Self {
        Self::new(dim, OperatorKind::ScaledTrace { scale: 1.0 }).unwrap()
    }

    pub fn scaled_trace(dim: usize, scale: f64) -> Result<Self> {
        Self::new(dim, OperatorKind::ScaledTrace { scale })
    }

    pub fn bellman(coefficients: Vec<SymMatrix>, tau: f64) -> Result<Self> {
        let dim = coefficients.first().map(|a| a.dim()).unwrap_or(0);
        Self::new(dim, OperatorKind::SmoothedBellman { coefficients, tau })
    }

    pub fn pucci_max(dim: usize, lambda: f64) -> Result<Self> {
        Self::new(dim, OperatorKind::PucciMax { lambda })
    }

    pub fn pucci_min(dim: usize, lambda: f64) -> Result<Self> {
        Self::new(dim, OperatorKind::PucciMin { lambda })
    }

    /// Replaces `Λ` by a looser declared value (must not be tighter than the
    /// computed one).
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if lambda + 1e-12 < self.lambda {
            return Err(Error::InvalidOperator(format!(
                "declared Λ = {lambda} is below the operator's ellipticity constant {}",
                self.lambda
            )));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn with_holder(mut self, holder: Holder) -> Self {
        self.holder = Some(holder);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn holder(&self) -> Option<Holder> {
        self.holder
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(
            self.kind,
            OperatorKind::PucciMax { .. } | OperatorKind::PucciMin { .. }
        )
    }

    /// `c₀ = 1/(16Λ²)`.
    pub fn c0(&self) -> f64 {
        1.0 / (16.0 * self.lambda * self.lambda)
    }

    fn check_dim(&self, m: &SymMatrix) -> Result<()> {
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: m.dim(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, m: &SymMatrix) -> Result<f64> {
        self.check_dim(m)?;
        Ok(self.eval_unchecked(m))
    }

    /// `evaluate` without the dimension check, for inner loops.
    #[inline]
    pub fn eval_unchecked(&self, m: &SymMatrix) -> f64 {
        match &self.kind {
            OperatorKind::ScaledTrace { scale } => scale * m.trace(),
            OperatorKind::SmoothedBellman { coefficients, tau } => {
                if coefficients.len() == 1 {
                    return coefficients[0].frob_dot(m);
                }
                let mut xs = [0.0f64; 16];
                let mut big: Vec<f64>;
                let xs: &mut [f64] = if coefficients.len() <= 16 {
                    &mut xs[..coefficients.len()]
                } else {
                    big = vec![0.0; coefficients.len()];
                    &mut big
                };
                for (x, a) in xs.iter_mut().zip(coefficients) {
                    *x = a.frob_dot(m);
                }
                let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = xs.iter().map(|x| ((x - mx) / tau).exp()).sum();
                mx + tau * (s.ln() - (coefficients.len() as f64).ln())
            }
            OperatorKind::PucciMax { lambda } => {
                let ev = m.eigenvalues();
                ev.iter()
                    .map(|&e| if e > 0.0 { lambda * e } else { e / lambda })
                    .sum()
            }
            OperatorKind::PucciMin { lambda } => {
                let ev = m.eigenvalues();
                ev.iter()
                    .map(|&e| if e > 0.0 { e / lambda } else { lambda * e })
                    .sum()
            }
        }
    }

    /// The matrix `F_ij(M)`.
    pub fn derivative(&self, m: &SymMatrix) -> Result<SymMatrix> {
        self.check_dim(m)?;
        match &self.kind {
            OperatorKind::ScaledTrace { scale } => Ok(SymMatrix::scaled_identity(self.dim, *scale)),
            OperatorKind::SmoothedBellman { coefficients, tau } => {
                let xs: Vec<f64> = coefficients.iter().map(|a| a.frob_dot(m)).collect();
                let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let ws: Vec<f64> = xs.iter().map(|x| ((x - mx) / tau).exp()).collect();
                let total: f64 = ws.iter().sum();
                let mut out = SymMatrix::zeros(self.dim);
                for (w, a) in ws.iter().zip(coefficients) {
                    out = out + a.scale(w / total);
                }
                Ok(out)
            }
            k => Err(Error::NonSmooth(k.name())),
        }
    }

    /// `(F(M), identity_slope(M))` in one pass over the coefficients.
    #[inline]
    pub fn eval_with_slope(&self, m: &SymMatrix) -> (f64, f64) {
        match &self.kind {
            OperatorKind::SmoothedBellman { coefficients, tau } if coefficients.len() > 1 && coefficients.len() <= 16 => {
                let mut xs = [0.0f64; 16];
                let mut mx = f64::NEG_INFINITY;
                for (x, a) in xs.iter_mut().zip(coefficients) {
                    *x = a.frob_dot(m);
                    mx = mx.max(*x);
                }
                let (mut num, mut den) = (0.0, 0.0);
                for (x, a) in xs.iter().zip(coefficients) {
                    let w = ((x - mx) / tau).exp();
                    num += w * a.trace();
                    den += w;
                }
                (mx + tau * (den.ln() - (coefficients.len() as f64).ln()), num / den)
            }
            _ => (self.eval_unchecked(m), self.identity_slope(m)),
        }
    }

    /// Right derivative of `t ↦ F(M + tI)` at `t = 0`. Defined for every kind.
    #[inline]
    pub fn identity_slope(&self, m: &SymMatrix) -> f64 {
        match &self.kind {
            OperatorKind::ScaledTrace { scale } => scale * self.dim as f64,
            OperatorKind::SmoothedBellman { coefficients, tau } => {
                if coefficients.len() == 1 {
                    return coefficients[0].trace();
                }
                let mx = coefficients.iter().map(|a| a.frob_dot(m)).fold(f64::NEG_INFINITY, f64::max);
                let mut num = 0.0;
                let mut den = 0.0;
                for a in coefficients {
                    let w = ((a.frob_dot(m) - mx) / tau).exp();
                    num += w * a.trace();
                    den += w;
                }
                num / den
            }
            OperatorKind::PucciMax { lambda } => m
                .eigenvalues()
                .iter()
                .map(|&e| if e >= 0.0 { *lambda } else { 1.0 / lambda })
                .sum(),
            OperatorKind::PucciMin { lambda } => m
                .eigenvalues()
                .iter()
                .map(|&e| if e >= 0.0 { 1.0 / lambda } else { *lambda })
                .sum(),
        }
    }

    /// `γ` with `F(γI) = 1` or `F(γ e⊗e) = 1`, by bisection on `[1/(2Λ), 2Λ]`.
    pub fn gamma_of(&self, direction: &GammaDirection) -> Result<f64> {
        let base = match direction {
            GammaDirection::Isotropic => SymMatrix::identity(self.dim),
            GammaDirection::Along(e) => {
                if e.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: e.len(),
                    });
                }
                let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n == 0.0 {
                    return Err(Error::Precondition("zero direction".into()));
                }
                let unit: Vec<f64> = e.iter().map(|x| x / n).collect();
                SymMatrix::outer(&unit)
            }
        };
        self.solve_scale(&base, 1.0, 0.5 / self.lambda, 2.0 * self.lambda)
    }

    /// Root `s ∈ [lo, hi]` of the increasing map `s ↦ F(s·base) − target`.
    pub fn solve_scale(&self, base: &SymMatrix, target: f64, lo: f64, hi: f64) -> Result<f64> {
        let g = |s: f64| self.eval_unchecked(&base.scale(s)) - target;
        let (mut a, mut b) = (lo, hi);
        let (ga, gb) = (g(a), g(b));
        if ga > 0.0 || gb < 0.0 {
            return Err(Error::Bracket(format!(
                "F(s·M) − {target} has signs ({ga:.3e}, {gb:.3e}) on [{lo}, {hi}]"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if g(mid) > 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        let s = if g(a).abs() <= g(b).abs() { a } else { b };
        if g(s).abs() > 1e-12 {
            return Err(Error::Bracket(format!(
                "bisection stalled with residual {:.3e}",
                g(s)
            )));
        }
        Ok(s)
    }

    /// Per-point coefficients `F_ij(D²φ)` of the linearized operator.
    pub fn linearize(&self, hessians: &[SymMatrix]) -> Result<LinearizedOperator> {
        let lo = 1.0 / self.lambda - 1e-12;
        let hi = self.lambda + 1e-12;
        let mut coefficients = Vec::with_capacity(hessians.len());
        for m in hessians {
            let c = self.derivative(m)?;
            let ev = c.eigenvalues();
            let (min, max) = (*ev.last().unwrap(), ev[0]);
            if min < lo || max > hi {
                return Err(Error::SpectrumOutOfBounds {
                    min,
                    max,
                    lambda: self.lambda,
                });
            }
            coefficients.push(c);
        }
        Ok(LinearizedOperator { coefficients })
    }

    pub fn to_config(&self) -> OperatorConfig {
        let mut cfg = OperatorConfig {
            kind: self.kind.name().to_string(),
            dim: self.dim,
            scale: None,
            tau: None,
            coefficients: None,
            pucci_lambda: None,
            lambda: Some(self.lambda),
            holder: self.holder,
        };
        match &self.kind {
            OperatorKind::ScaledTrace { scale } => cfg.scale = Some(*scale),
            OperatorKind::SmoothedBellman { coefficients, tau } => {
                cfg.tau = Some(*tau);
                cfg.coefficients = Some(coefficients.iter().map(|a| a.to_row_major()).collect());
            }
            OperatorKind::PucciMax { lambda } | OperatorKind::PucciMin { lambda } => {
                cfg.pucci_lambda = Some(*lambda)
            }
        }
        cfg
    }
}

/// Linearized operator `L_φ(M) = Σ F_ij(D²φ) M_ij`, one coefficient matrix per
/// point (a single entry means constant coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedOperator {
    pub coefficients: Vec<SymMatrix>,
}

impl LinearizedOperator {
    pub fn apply(&self, point: usize, m: &SymMatrix) -> f64 {
        let c = if self.coefficients.len() == 1 {
            &self.coefficients[0]
        } else {
            &self.coefficients[point]
        };
        c.frob_dot(m)
    }
}

/// Text form of an operator (TOML/JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Row-major `dim²` lists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pucci_lambda: Option<f64>,
    /// Declared ellipticity constant; defaults to the computed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<Holder>,
}

impl OperatorConfig {
    pub fn build(&self) -> Result<EllipticOperator> {
        let kind = match self.kind.as_str() {
            "scaled-trace" | "trace" => OperatorKind::ScaledTrace {
                scale: self.scale.unwrap_or(1.0),
            },
            "smoothed-bellman" | "bellman" => {
                let raw = self
                    .coefficients
                    .as_ref()
                    .ok_or_else(|| Error::InvalidOperator("bellman needs `coefficients`".into()))?;
                let coefficients = raw
                    .iter()
                    .map(|a| SymMatrix::from_row_major(self.dim, a))
                    .collect::<Result<Vec<_>>>()?;
                OperatorKind::SmoothedBellman {
                    coefficients,
                    tau: self
                        .tau
                        .ok_or_else(|| Error::InvalidOperator("bellman needs `tau`".into()))?,
                }
            }
            "pucci-max" => OperatorKind::PucciMax {
                lambda: self.pucci_lambda.unwrap_or(1.0),
            },
            "pucci-min" => OperatorKind::PucciMin {
                lambda: self.pucci_lambda.unwrap_or(1.0),
            },
            other => return Err(Error::InvalidOperator(format!("unknown kind `{other}`"))),
        };
        let mut op = EllipticOperator::new(self.dim, kind)?;
        if let Some(l) = self.lambda {
            op = op.with_lambda(l)?;
        }
        if let Some(h) = self.holder {
            op = op.with_holder(h);
        }
        Ok(op)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("operator config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_derivative(f: &EllipticOperator, m: &SymMatrix, step: f64) -> SymMatrix {
        let d = m.dim();
        let mut out = SymMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                let mut e = SymMatrix::zeros(d);
                e.set(i, j, 1.0);
                let plus = f.evaluate(&(*m + e.scale(step))).unwrap();
                let minus = f.evaluate(&(*m - e.scale(step))).unwrap();
                // Off-diagonal perturbation moves both (i,j) and (j,i).
                let denom = if i == j { 2.0 * step } else { 4.0 * step };
                out.set(i, j, (plus - minus) / denom);
            }
        }
        out
    }

    #[test]
    fn evaluate_examples() {
        let f = EllipticOperator::trace(2);
        assert_eq!(f.evaluate(&SymMatrix::zeros(2)).unwrap(), 0.0);
        assert_eq!(f.evaluate(&SymMatrix::identity(2)).unwrap(), 2.0);
        for tau in [0.01, 0.3, 5.0] {
            let b = EllipticOperator::bellman(vec![SymMatrix::identity(2); 2], tau).unwrap();
            let v = b.evaluate(&SymMatrix::identity(2)).unwrap();
            // Direct formula: τ·ln(2·e^{2/τ}) − τ·ln 2.
            let direct = tau * (2.0 * (2.0 / tau).exp()).ln() - tau * 2f64.ln();
            assert!((v - 2.0).abs() < 1e-12 && (v - direct).abs() < 1e-9);
        }
        assert!(f.evaluate(&SymMatrix::zeros(3)).is_err());
    }

    #[test]
    fn derivative_examples() {
        let f = EllipticOperator::trace(2);
        let m = SymMatrix::diag(&[3.0, -1.0]);
        assert_eq!(f.derivative(&m).unwrap(), SymMatrix::identity(2));
        let a1 = SymMatrix::from_row_major(2, &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let single = EllipticOperator::bellman(vec![a1], 0.2).unwrap();
        assert!(single.derivative(&m).unwrap().max_abs_diff(&a1) < 1e-15);

        let two = EllipticOperator::bellman(
            vec![SymMatrix::identity(2), SymMatrix::scaled_identity(2, 2.0)],
            1.0,
        )
        .unwrap();
        let z = SymMatrix::zeros(2);
        let fd = fd_derivative(&two, &z, 1e-6);
        let an = two.derivative(&z).unwrap();
        assert!(an.max_abs_diff(&fd) < 1e-6);
        assert!(an.max_abs_diff(&SymMatrix::scaled_identity(2, 1.5)) < 1e-12);

        let pucci = EllipticOperator::pucci_max(2, 2.0).unwrap();
        assert!(matches!(pucci.derivative(&z), Err(Error::NonSmooth(_))));
    }

    #[test]
    fn gamma_examples() {
        let f = EllipticOperator::trace(2);
        assert!((f.gamma_of(&GammaDirection::Isotropic).unwrap() - 0.5).abs() < 1e-12);
        assert!((f.gamma_of(&GammaDirection::Along(vec![1.0, 0.0])).unwrap() - 1.0).abs() < 1e-12);
        let b = EllipticOperator::bellman(
            vec![SymMatrix::identity(2), SymMatrix::scaled_identity(2, 2.0)],
            0.1,
        )
        .unwrap();
        let g = b.gamma_of(&GammaDirection::Isotropic).unwrap();
        assert!((0.25..=0.5).contains(&g));
        let fg = b.evaluate(&SymMatrix::scaled_identity(2, g)).unwrap();
        assert!((fg - 1.0).abs() <= 1e-12);
        assert!(g >= 1.0 / b.lambda() && g <= b.lambda());
    }

    #[test]
    fn linearize_checks() {
        let f = EllipticOperator::trace(3);
        let l = f.linearize(&[SymMatrix::diag(&[1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(l.coefficients[0], SymMatrix::identity(3));
        let p = EllipticOperator::pucci_min(2, 1.5).unwrap();
        assert!(p.linearize(&[SymMatrix::zeros(2)]).is_err());
    }

    #[test]
    fn bellman_rejects_singular_coefficient() {
        let r = EllipticOperator::bellman(vec![SymMatrix::diag(&[1.0, 0.0])], 0.1);
        assert!(matches!(r, Err(Error::InvalidOperator(_))));
    }

    #[test]
    fn config_round_trip() {
        let b = EllipticOperator::bellman(
            vec![
                SymMatrix::identity(2),
                SymMatrix::from_row_major(2, &[2.0, 0.5, 0.5, 1.0]).unwrap(),
            ],
            0.25,
        )
        .unwrap();
        let text = b.to_config().to_toml();
        let back = OperatorConfig::from_toml(&text).unwrap().build().unwrap();
        assert_eq!(back, b);
        let bad = OperatorConfig::from_toml("kind = \"trace\"\ndim = 2\nlambda = 0.5\n")
            .unwrap()
            .build();
        assert!(bad.is_err());
    }
}
