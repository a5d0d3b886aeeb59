//! The iteration scheme at a singular point: rescale, fit and project, branch
//! on `λ₂(D²p_k)` against `κ ε_k`, and track `ε_k`, stages, the Hessians
//! `D²h_k(0)`, and the blow-up limit.
//!
//! Every rescaled field `u_k(y) = u(x₀ + R_k y)/R_k²` is sampled from the
//! original solve, so interpolation errors do not compound across steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freeboundary::{classify_point, ClassifyOptions, PointClass};
use crate::grid::{Grid, ScalarField};
use crate::linalg::SymMatrix;
use crate::operator::EllipticOperator;
use crate::quadratic::{certify, fit_quadratic, project_to_class, ClassTag, QuadraticPoly};
use crate::solver::solve_unconstrained;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupConfig {
    pub kappa: f64,
    /// Case-2 radius.
    pub rho: f64,
    /// Case-1 candidate radii.
    pub r_case1: Vec<f64>,
    pub beta_expect: f64,
    pub max_steps: usize,
    /// Steps taken even when `ε_k` already sits at the floor.
    pub min_steps: usize,
    /// Floor `floor_mult·(h/R_k)²`.
    pub floor_mult: f64,
    /// `R_0`: the scheme starts from `u(x₀ + R_0 y)/R_0²`.
    pub initial_radius: f64,
    /// Nodes per side of the rescaled grids.
    pub target_n: usize,
    /// Telescope constant `C_tel`.
    pub c_tel: f64,
    pub check_singular: bool,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        BlowupConfig {
            kappa: 10.0,
            rho: 0.25,
            r_case1: vec![0.25, 0.3125, 0.375, 0.4375],
            beta_expect: 0.1,
            max_steps: 12,
            min_steps: 3,
            floor_mult: 20.0,
            initial_radius: 0.5,
            target_n: 129,
            c_tel: 10.0,
            check_singular: true,
        }
    }
}

impl BlowupConfig {
    pub fn validate(&self) -> Result<()> {
        let r1_min = self.r_case1.iter().copied().fold(f64::INFINITY, f64::min);
        let r1_max = self.r_case1.iter().copied().fold(0.0, f64::max);
        let ok = self.kappa > 0.0
            && !self.r_case1.is_empty()
            && self.rho > 0.0
            && self.rho <= r1_min
            && r1_max < 0.5
            && (0.0..1.0).contains(&self.beta_expect)
            && self.floor_mult >= 0.0
            && self.initial_radius > 0.0
            && self.c_tel > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid blow-up configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Case1,
    Case2a,
    Case2b,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Case1 => "case1",
            Branch::Case2a => "case2a",
            Branch::Case2b => "case2b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    /// `R_k`: scale of `u_k` relative to the original field.
    pub r_total: f64,
    pub p_k: QuadraticPoly,
    pub eps_k: f64,
    /// `floor_mult·(h/R_k)²`.
    pub floor: f64,
    pub branch: Branch,
    pub lambda2: f64,
    /// `κ·max(ε_k, tol_kernel)`, the branch threshold.
    pub kappa_eps: f64,
    /// Radius of the step (`ρ` in Case 2, the selected candidate in Case 1).
    pub r_step: f64,
    pub eps_next: f64,
    pub d2h0: Option<SymMatrix>,
    pub uh_gap: Option<f64>,
    pub c_gap: Option<f64>,
    /// Diagnostic `x'` dimension: eigenvalues of `D²p_k` at least `κ ε_k`.
    pub x_prime_dim: Option<usize>,
    /// `sup_{B_1} |u_k − p_k|` on the rescaled grid.
    pub sup_dev: f64,
    /// `min λ_min(D²u)` over the original nodes of `B_{R_k}(x₀)`.
    pub hess_floor: f64,
    /// Both conditions of `S(p_k, ε_k, 1)` with slack `20h²`.
    pub member: bool,
    /// `ε'` handed over by the previous step, before the new sampling and
    /// the Hessian floor were folded into `ε_k`.
    pub eps_predicted: Option<f64>,
    /// Membership with `ε'` in place of `ε_k`.
    pub member_predicted: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupTrace {
    pub x0: Vec<f64>,
    pub h: f64,
    pub c0: f64,
    pub tol_kernel: f64,
    pub config: BlowupConfig,
    pub steps: Vec<StepRecord>,
    /// First step index of each stage.
    pub stages: Vec<usize>,
    pub limit_q: Option<QuadraticPoly>,
    pub stratum: Option<usize>,
    /// `max_{n ≥ m} ‖D²p_n − D²p_m‖ / ε_eff,m`.
    pub drift_constant: f64,
    pub breakdown: Option<String>,
}

impl BlowupTrace {
    /// `max(ε_k, floor_k)` per step.
    pub fn eps_eff(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.eps_k.max(s.floor)).collect()
    }

    pub fn stage_of(&self, k: usize) -> usize {
        self.stages.iter().filter(|&&s| s <= k).count().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,r_total,eps_k,branch,lambda2,kappa_eps\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{:e},{:e},{},{:e},{:e}\n",
                s.k,
                s.r_total,
                s.eps_k,
                s.branch.label(),
                s.lambda2,
                s.kappa_eps
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case1Outcome {
    pub p: QuadraticPoly,
    pub eps: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case2Outcome {
    pub p: QuadraticPoly,
    pub eps: f64,
    pub d2h0: SymMatrix,
    pub uh_gap: f64,
    pub alt: u8,
    pub c_gap: Option<f64>,
}

fn origin(d: usize) -> Vec<f64> {
    vec![0.0; d]
}

/// Best `Q`-polynomial over the Case-1 radii.
pub fn step_case1(
    u_k: &ScalarField,
    p_k: &QuadraticPoly,
    eps_k: f64,
    op: &EllipticOperator,
    cfg: &BlowupConfig,
) -> Result<Case1Outcome> {
    let l2 = p_k.lambda2();
    if l2 > cfg.kappa * eps_k {
        return Err(Error::Precondition(format!(
            "Case 1 needs λ₂ ≤ κε, got λ₂ = {l2:.3e} > {:.3e}",
            cfg.kappa * eps_k
        )));
    }
    let d = u_k.grid.dim;
    let c = origin(d);
    let mut best: Option<Case1Outcome> = None;
    for &r in &cfg.r_case1 {
        let fit = fit_quadratic(u_k, &c, r, true)?;
        let p = project_to_class(&fit.a, &fit.b, op, ClassTag::Q)?;
        let eps = certify(u_k, &p, &c, r, op)?.eps;
        if best.as_ref().is_none_or(|b| eps < b.eps) {
            best = Some(Case1Outcome { p, eps, r });
        }
    }
    best.ok_or_else(|| Error::Precondition("no Case-1 radii configured".into()))
}

/// Candidate from `D²h(0)`, `∇h(0)` of the unconstrained solve on the box.
pub fn step_case2(
    u_k: &ScalarField,
    p_k: &QuadraticPoly,
    eps_k: f64,
    op: &EllipticOperator,
    cfg: &BlowupConfig,
) -> Result<Case2Outcome> {
    let l2 = p_k.lambda2();
    if l2 < cfg.kappa * eps_k {
        return Err(Error::Precondition(format!(
            "Case 2 needs λ₂ ≥ κε, got λ₂ = {l2:.3e} < {:.3e}",
            cfg.kappa * eps_k
        )));
    }
    let g = u_k.grid;
    let d = g.dim;
    let (h, _) = solve_unconstrained(op, u_k)?;
    let center = g.center_index();
    let d2h0 = h.hessian_at(center)?;
    let grad = h.gradient_at(center)?;
    let p = project_to_class(&d2h0, &grad, op, ClassTag::UQ)?;
    let eps = certify(u_k, &p, &origin(d), cfg.rho, op)?.eps;
    let mut probe = origin(d);
    probe[0] = 0.5 * cfg.rho;
    let uh_gap = u_k.interpolate(&probe)? - h.interpolate(&probe)?;
    let alt = if eps <= (1.0 - cfg.beta_expect) * eps_k { 1 } else { 2 };
    let c_gap = (alt == 2 && eps_k > eps).then(|| uh_gap / (eps_k - eps));
    Ok(Case2Outcome {
        p,
        eps,
        d2h0,
        uh_gap,
        alt,
        c_gap,
    })
}

/// `p_{k+1}(y) = ½ y·D²p' y + (1/r) ∇p'(0)·y`.
fn rescale_poly(p: &QuadraticPoly, r: f64) -> QuadraticPoly {
    QuadraticPoly {
        a: p.a,
        b: p.b.iter().map(|b| b / r).collect(),
        c: 0.0,
        tag: p.tag,
    }
}

fn sup_dev(u: &ScalarField, p: &QuadraticPoly) -> Result<f64> {
    let d = u.grid.dim;
    let nodes = u.checked_ball(&origin(d), 1.0)?;
    Ok(nodes.iter().fold(0.0, |m, &i| {
        let x = u.grid.node_point(i);
        m.max((u.values[i] - p.eval(&x[..d])).abs())
    }))
}

/// Stage starts: a stage ends once `ε_eff` drops below `(1 − β)` times the
/// value that opened it.
pub fn stage_starts(eps_eff: &[f64], beta: f64) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut open = None;
    for (k, &e) in eps_eff.iter().enumerate() {
        match open {
            Some(e_s) if e >= (1.0 - beta) * e_s => {}
            _ => {
                starts.push(k);
                open = Some(e);
            }
        }
    }
    starts
}

pub fn run_blowup(u: &ScalarField, x0: &[f64], op: &EllipticOperator, cfg: &BlowupConfig) -> Result<BlowupTrace> {
    cfg.validate()?;
    let g = u.grid;
    let d = g.dim;
    if x0.len() != d || op.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    if cfg.check_singular {
        let c = classify_point(u, x0, &ClassifyOptions::default())?;
        if c.class != PointClass::Singular {
            return Err(Error::Precondition(format!(
                "x0 is not singular (δ(r_min) = {:.3})",
                c.delta_r_min
            )));
        }
    }
    let h = g.h();
    let tol_kernel = (10.0 * h * h).max(1e-6);
    let target = Grid::new(d, cfg.target_n, 1.0)?;
    let sample = |r: f64| u.rescale(x0, r, target).map(|s| s.field);
    let hess_floor = |r: f64| u.min_hessian_eigen_ball(x0, r.max(h));
    let floor_at = |r: f64| cfg.floor_mult * (h / r).powi(2);
    let c0 = op.c0();
    // Smallest ε with D²u ≥ −c₀ε on B_R; D²u_k = D²u, so no rescaling.
    let hess_eps = |hf: f64| (-hf).max(0.0) / c0;

    let mut r_total = cfg.initial_radius;
    let mut u_k = sample(r_total)?;
    let fit = fit_quadratic(&u_k, &origin(d), 1.0, true)?;
    let mut p_k = project_to_class(&fit.a, &fit.b, op, ClassTag::Q)?;
    let mut hf_k = hess_floor(r_total)?;
    let mut eps_k = sup_dev(&u_k, &p_k)?.max(hess_eps(hf_k));
    let mut eps_pred: Option<f64> = None;

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut breakdown = None;
    for k in 0..cfg.max_steps {
        let floor = floor_at(r_total);
        if r_total < 2.0 * h * (1.0 - 1e-9) || (k >= cfg.min_steps && eps_k <= floor) {
            break;
        }
        let lambda2 = p_k.lambda2();
        let eps_branch = eps_k.max(tol_kernel);
        let kappa_eps = cfg.kappa * eps_branch;
        let sup = sup_dev(&u_k, &p_k)?;
        let hf = hf_k;
        let slack = 20.0 * h * h;
        let member = sup <= eps_k && hf >= -c0 * eps_k - slack;
        let member_predicted = eps_pred.map(|e| sup <= e && hf >= -c0 * e - slack);
        let mut rec = StepRecord {
            k,
            r_total,
            p_k: p_k.clone(),
            eps_k,
            floor,
            branch: Branch::Case1,
            lambda2,
            kappa_eps,
            r_step: 0.0,
            eps_next: f64::NAN,
            d2h0: None,
            uh_gap: None,
            c_gap: None,
            x_prime_dim: None,
            sup_dev: sup,
            hess_floor: hf,
            member,
            eps_predicted: eps_pred,
            member_predicted,
        };
        let outcome = if lambda2 <= kappa_eps {
            step_case1(&u_k, &p_k, eps_branch, op, cfg).map(|o| (o.p, o.eps, o.r))
        } else {
            step_case2(&u_k, &p_k, eps_branch, op, cfg).map(|o| {
                rec.branch = if o.alt == 1 { Branch::Case2a } else { Branch::Case2b };
                rec.d2h0 = Some(o.d2h0);
                rec.uh_gap = Some(o.uh_gap);
                rec.c_gap = o.c_gap;
                rec.x_prime_dim = Some(p_k.a.eigenvalues().iter().filter(|&&a| a >= kappa_eps).count());
                (o.p, o.eps, cfg.rho)
            })
        };
        let (p_new, eps_step, r) = match outcome {
            Ok(v) => v,
            Err(e) => {
                breakdown = Some(format!("step {k}: {e}"));
                steps.push(rec);
                break;
            }
        };
        rec.r_step = r;
        let next_r = r_total * r;
        let next_u = sample(next_r)?;
        let next_p = rescale_poly(&p_new, r);
        // The accepted ε also covers the sup on the new sampling and the
        // Hessian floor on the new ball.
        let next_hf = hess_floor(next_r)?;
        let next_eps = eps_step.max(sup_dev(&next_u, &next_p)?).max(hess_eps(next_hf));
        rec.eps_next = next_eps;
        steps.push(rec);
        if next_eps > eps_k.max(floor_at(next_r)) {
            breakdown = Some(format!(
                "step {k}: ε rose from {eps_k:.3e} to {next_eps:.3e} above the floor {:.3e}",
                floor_at(next_r)
            ));
            break;
        }
        r_total = next_r;
        u_k = next_u;
        p_k = next_p;
        eps_k = next_eps;
        hf_k = next_hf;
        eps_pred = Some(eps_step);
    }

    let eps_eff: Vec<f64> = steps.iter().map(|s| s.eps_k.max(s.floor)).collect();
    let stages = stage_starts(&eps_eff, cfg.beta_expect);
    let mut drift: f64 = 0.0;
    for m in 0..steps.len() {
        for n in m + 1..steps.len() {
            let diff = (steps[n].p_k.a - steps[m].p_k.a).spectral_norm();
            drift = drift.max(diff / eps_eff[m]);
        }
    }
    // The limit is read off the best-certified step, not the deepest one:
    // near the grid scale the fit picks up O(h²/R²) offsets.
    let best = (0..steps.len()).rev().min_by(|&a, &b| eps_eff[a].total_cmp(&eps_eff[b]));
    let a_lim = best.map(|k| steps[k].p_k.a).unwrap_or(p_k.a);
    let limit_q = project_to_class(&a_lim, &origin(d), op, ClassTag::Q).ok();
    let stratum = limit_q
        .as_ref()
        .map(|q| q.a.eigenvalues().iter().filter(|&&a| a <= tol_kernel).count());
    Ok(BlowupTrace {
        x0: x0.to_vec(),
        h,
        c0,
        tol_kernel,
        config: cfg.clone(),
        steps,
        stages,
        limit_q,
        stratum,
        drift_constant: drift,
        breakdown,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelescopeReport {
    pub pairs: usize,
    /// `Σ ‖D²h_{k+1}(0) − D²h_k(0)‖` over same-stage Case-2 pairs.
    pub s: f64,
    /// `Σ (ε_k − ε_{k+1})` over the same pairs.
    pub t: f64,
    /// Grid-noise level for `S`: the largest floor among the pairs.
    pub noise: f64,
    pub ratio: f64,
    pub c_tel: f64,
    pub vacuous: bool,
    pub passes: bool,
}

pub fn telescope_check(trace: &BlowupTrace) -> Result<TelescopeReport> {
    if trace.steps.len() < 2 {
        return Err(Error::Insufficient(format!("{} step(s) in the trace", trace.steps.len())));
    }
    let (mut s, mut t, mut noise, mut pairs) = (0.0, 0.0, 0.0f64, 0);
    for w in trace.steps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if let (Some(ha), Some(hb)) = (a.d2h0, b.d2h0) {
            if trace.stage_of(a.k) == trace.stage_of(b.k) {
                s += (hb - ha).spectral_norm();
                t += a.eps_k - b.eps_k;
                noise = noise.max(a.floor).max(b.floor);
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::Insufficient("no consecutive Case-2 steps within one stage".into()));
    }
    let ratio = s / t.max(noise);
    let vacuous = s <= noise;
    let c_tel = trace.config.c_tel;
    Ok(TelescopeReport {
        pairs,
        s,
        t,
        noise,
        ratio,
        c_tel,
        vacuous,
        passes: vacuous || s <= c_tel * t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    Geometric,
    LogPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate_kind: RateKind,
    /// `ε_k ≈ ε₀ λ^k`.
    pub lambda: f64,
    pub geometric_eps0: f64,
    pub geometric_residual: f64,
    /// `ε_k ≈ C (k + k0)^{−c}`.
    pub c: f64,
    pub k0: f64,
    pub log_power_coeff: f64,
    pub log_power_residual: f64,
    pub points: usize,
}

/// Least-squares line through `(x, y)`: `(intercept, slope, rms residual)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    (icpt, slope, (rss / n).sqrt())
}

/// Geometric and log-power fits of a decay sequence; the offset `k0` of the
/// log-power model is scanned on `[0, 4N]`.
pub fn decay_fit_eps(eps: &[f64]) -> Result<DecayFit> {
    if eps.len() < 4 {
        return Err(Error::Insufficient(format!("{} points, need at least 4", eps.len())));
    }
    if eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Precondition("decay values must be positive".into()));
    }
    let ks: Vec<f64> = (0..eps.len()).map(|k| k as f64).collect();
    let logs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let (a, b, geo_res) = line_fit(&ks, &logs);

    let n = eps.len() as f64;
    let fit_at = |k0: f64| {
        let lk: Vec<f64> = ks.iter().map(|k| (k + k0).ln()).collect();
        line_fit(&lk, &logs)
    };
    // Coarse scan then golden-section refinement of k0.
    let upper = 4.0 * n;
    let samples = 400;
    let mut best = (f64::INFINITY, 1.0);
    for i in 0..=samples {
        let k0 = 1.0 + (upper - 1.0) * i as f64 / samples as f64;
        let r = fit_at(k0).2;
        if r < best.0 {
            best = (r, k0);
        }
    }
    let step = (upper - 1.0) / samples as f64;
    let (mut lo, mut hi) = ((best.1 - step).max(1.0), (best.1 + step).min(upper));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if fit_at(m1).2 <= fit_at(m2).2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let k0 = 0.5 * (lo + hi);
    let (la, lb, pow_res) = fit_at(k0);
    Ok(DecayFit {
        rate_kind: if geo_res <= pow_res {
            RateKind::Geometric
        } else {
            RateKind::LogPower
        },
        lambda: b.exp(),
        geometric_eps0: a.exp(),
        geometric_residual: geo_res,
        c: -lb,
        k0,
        log_power_coeff: la.exp(),
        log_power_residual: pow_res,
        points: eps.len(),
    })
}

/// Decay fit over the steps whose `ε_k` lies above the floor.
pub fn decay_fit(trace: &BlowupTrace) -> Result<DecayFit> {
    let eps: Vec<f64> = trace
        .steps
        .iter()
        .filter(|s| s.eps_k > s.floor)
        .map(|s| s.eps_k)
        .collect();
    decay_fit_eps(&eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_follow_the_drop_rule() {
        let e = [1.0, 0.95, 0.92, 0.85, 0.84, 0.5, 0.49];
        assert_eq!(stage_starts(&e, 0.1), vec![0, 3, 5]);
    }

    #[test]
    fn config_validation() {
        assert!(BlowupConfig::default().validate().is_ok());
        let bad = BlowupConfig {
            rho: 0.4,
            ..BlowupConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn decay_guards() {
        assert!(decay_fit_eps(&[0.1, 0.05, 0.025]).is_err());
        assert!(decay_fit_eps(&[0.1, 0.05, 0.0, 0.01]).is_err());
    }
}
