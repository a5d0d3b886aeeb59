use fblab_core::quadratic::{certify, project_to_class, ClassTag, QuadraticPoly};
use fblab_core::verification::{
    barrier_check, build_barrier, convexity_check, empirical_eta_bar, monotonicity_check, sample_centers,
    smallest_c_test, BarrierSpec, MonotoneParams, MonotoneVariant,
};
use fblab_core::{solve_obstacle, EllipticOperator, Fixture, GammaDirection, Grid, Method, ScalarField, SymMatrix};

fn gamma(op: &EllipticOperator) -> f64 {
    op.gamma_of(&GammaDirection::Isotropic).unwrap()
}

fn paraboloid(g: Grid, gamma: f64) -> ScalarField {
    ScalarField::from_fn(g, |x| 0.5 * gamma * (x[0] * x[0] + x[1] * x[1]))
}

fn inside(g: &Grid, i: usize, r: f64) -> bool {
    let x = g.node_point(i);
    x[0].hypot(x[1]) < r
}

#[test]
fn continuous_data_reproduces_the_paraboloid() {
    let g = Grid::new(2, 129, 1.0).unwrap();
    let h = g.h();
    for op in [
        EllipticOperator::trace(2),
        EllipticOperator::bellman(vec![SymMatrix::identity(2), SymMatrix::diag(&[1.5, 0.7])], 0.05).unwrap(),
    ] {
        let gm = gamma(&op);
        let r = 0.5;
        let spec = BarrierSpec { r, eta: r / 100.0, big_n: 0.5 * gm * r * r };
        let w = build_barrier(&op, &spec, g).unwrap();
        let p = paraboloid(g, gm);
        let err = (0..g.len()).filter(|&i| inside(&g, i, r)).fold(0.0f64, |m, i| m.max((w.values[i] - p.values[i]).abs()));
        assert!(err <= 5.0 * h * h, "err = {err}");
        // x₀ = 0: w₀ = ½γ|x|² ≥ γ|x|²/64.
        let rep = barrier_check(&op, &w, &spec, &[vec![0.0, 0.0]]).unwrap();
        assert!(rep.passes && rep.centers[0].inner_margin >= -5.0 * h * h);
    }
}

#[test]
fn wide_strip_approaches_the_constant_data_solution() {
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 129, 1.0).unwrap();
    let h = g.h();
    let gm = gamma(&op);
    let r = 0.5;
    let big_n = 10.0 * gm * r * r;
    let spec = BarrierSpec { r, eta: 0.99 * r, big_n };
    let w = build_barrier(&op, &spec, g).unwrap();
    // Oracle: with the whole rim at N the solution is ½γ|x|² + N − ½γr².
    let shift = big_n - 0.5 * gm * r * r;
    let p = paraboloid(g, gm);
    for i in (0..g.len()).filter(|&i| inside(&g, i, r)) {
        let phi = w.values[i] - p.values[i];
        assert!(phi >= -10.0 * h * h && phi <= shift + 10.0 * h * h);
    }
    let c = g.center_index();
    assert!(w.values[c] - p.values[c] >= 0.8 * shift);
    // The strip bound then fails: w_{x₀} on the rim is only ~½γ|x − x₀|².
    let rep = barrier_check(&op, &w, &spec, &sample_centers(2, r / 2.0, 9)).unwrap();
    assert!(!rep.passes);
}

#[test]
fn barrier_lemma_at_the_reference_spec() {
    // The discrete strip is at least one column wide, so the effective η is
    // about max(η, h); at n = 129 that exceeds the empirical η̄.
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 257, 1.0).unwrap();
    let h = g.h();
    let gm = gamma(&op);
    let r = 0.5;
    let spec = BarrierSpec { r, eta: r / 100.0, big_n: 10.0 * gm * r * r };
    let w = build_barrier(&op, &spec, g).unwrap();
    let p = paraboloid(g, gm);
    assert!((0..g.len()).filter(|&i| inside(&g, i, r)).all(|i| w.values[i] >= p.values[i] - 10.0 * h * h));
    let rep = barrier_check(&op, &w, &spec, &sample_centers(2, r / 2.0, 25)).unwrap();
    assert!(rep.passes && rep.min_slack > 0.0, "{rep:?}");
    assert!(rep.centers.iter().all(|c| c.strip_margin.is_some()));
    // Centers must lie in B_{r/2}.
    assert!(barrier_check(&op, &w, &spec, &[vec![0.4, 0.0]]).is_err());
}

#[test]
fn eta_bar_is_nonincreasing_in_big_n() {
    // For the trace operator φ = w − ½γ|x|² is (N − ½γr²) times a harmonic
    // measure, so raising N scales up any negative part of φ_{x₀}; the strip
    // bound never binds once N > 8γr².
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 257, 1.0).unwrap();
    let gm = gamma(&op);
    let r = 0.5;
    let centers = sample_centers(2, r / 2.0, 9);
    let bars: Vec<f64> = [8.5, 10.0, 20.0]
        .iter()
        .map(|k| {
            let e = empirical_eta_bar(&op, r, k * gm * r * r, g, &centers).unwrap();
            e.eta_bar.unwrap_or(0.0)
        })
        .collect();
    eprintln!("η̄ = {bars:?}");
    assert!(bars.windows(2).all(|w| w[0] >= w[1]));
    assert!(bars[0] > 0.0 && bars[0] < r);
}

#[test]
fn monotonicity_examples() {
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 129, 1.0).unwrap();
    let hs = Fixture::from_name("halfspace", &op).unwrap().field(g);
    let eps = 0.1;
    for variant in [MonotoneVariant::Strip, MonotoneVariant::Level] {
        // D₁u = γx₁⁺: zero on the left of the strip, so σ = 0 in the strip form.
        let params = MonotoneParams { k: 1.0, sigma: 0.0, eta: 0.05, r: 0.5, eps, center: vec![0.0, 0.0], variant };
        let rep = monotonicity_check(&op, &hs, &[1.0, 0.0], &params).unwrap();
        assert!(rep.hypotheses_hold && rep.conclusion_holds == Some(true), "{rep:?}");
    }

    // Strictly convex p around a point where ∇p·e > 0.
    let a = fblab_core::fixtures::normalized_diag(&op, &[1.0, 0.6]).unwrap();
    let p = ScalarField::from_fn(g, |x| 0.5 * a.quad_form(&x[..2]));
    let params = MonotoneParams {
        k: 1.0,
        sigma: 1.0,
        eta: 0.01,
        r: 0.1,
        eps: 0.1,
        center: vec![0.5, 0.3],
        variant: MonotoneVariant::Strip,
    };
    let rep = monotonicity_check(&op, &p, &[1.0, 1.0], &params).unwrap();
    assert!(rep.hypotheses_hold && rep.conclusion_holds == Some(true));

    // Hypotheses fail in direction −e: no conclusion is claimed.
    let rep = monotonicity_check(&op, &p, &[-1.0, -1.0], &params).unwrap();
    assert!(!rep.hypotheses_hold && rep.conclusion_holds.is_none());
    assert!(rep.conclusion_min < 0.0);
}

#[test]
fn monotonicity_on_a_perturbed_singular_solution_is_reported() {
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 129, 1.0).unwrap();
    let b = Fixture::from_name("top-quartic", &op).unwrap().field(g);
    let (u, _) = solve_obstacle(&op, &b, Method::Penalization).unwrap();
    let params = MonotoneParams {
        k: 10.0,
        sigma: 0.5,
        eta: 0.1,
        r: 0.5,
        eps: 0.05,
        center: vec![0.0, 0.0],
        variant: MonotoneVariant::Level,
    };
    let rep = monotonicity_check(&op, &u, &[1.0, 0.0], &params).unwrap();
    eprintln!("{rep:?}");
    assert!(rep.lower_margin.is_finite() && rep.conclusion_min.is_finite());
    assert_eq!(rep.conclusion_holds.is_some(), rep.hypotheses_hold);
}

#[test]
fn convexity_examples() {
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 129, 1.0).unwrap();
    let h = g.h();
    let a = fblab_core::fixtures::normalized_diag(&op, &[1.0, 0.6]).unwrap();
    let p = project_to_class(&a, &[0.0, 0.0], &op, ClassTag::Q).unwrap();
    let u = ScalarField::from_fn(g, |x| p.eval(&x[..2]));
    let cert = certify(&u, &p, &[0.0, 0.0], 1.0, &op).unwrap();
    let rep = convexity_check(&u, &cert, &[0.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
    assert!(rep.holds && (rep.min_d_ee_u - a.get(1, 1)).abs() <= 1e-9);

    // Half-space against ½γx₁²: D₁₁u = γχ_{x₁>0} up to one cell.
    let gm = op.gamma_of(&GammaDirection::Along(vec![1.0, 0.0])).unwrap();
    let q = QuadraticPoly { a: SymMatrix::diag(&[gm, 0.0]), b: vec![0.0, 0.0], c: 0.0, tag: ClassTag::Q };
    let hs = Fixture::from_name("halfspace", &op).unwrap().field(g);
    let cert = certify(&hs, &q, &[0.0, 0.0], 1.0, &op).unwrap();
    let rep = convexity_check(&hs, &cert, &[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap();
    assert!(rep.holds && rep.min_d_ee_u >= -10.0 * h * h);
    // C_test above the available ratio is a precondition failure.
    assert!(convexity_check(&hs, &cert, &[0.0, 0.0], &[1.0, 0.0], 1e3).is_err());
}

#[test]
fn convexity_c_test_on_manufactured_solutions() {
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 129, 1.0).unwrap();
    let mut reports = Vec::new();
    for name in ["manufactured", "stratum0", "top-stratum"] {
        let fx = Fixture::from_name(name, &op).unwrap();
        let (u, _) = solve_obstacle(&op, &fx.field(g), Method::Penalization).unwrap();
        let a = fx.hessian_at_origin(2).unwrap();
        let p = project_to_class(&a, &[0.0, 0.0], &op, ClassTag::Q).unwrap();
        let cert = certify(&u, &p, &[0.0, 0.0], 0.5, &op).unwrap();
        if !cert.member {
            eprintln!("{name}: not in S (floor {:.3e}, ε {:.3e})", cert.convexity_floor, cert.eps);
            continue;
        }
        let (vals, vecs) = p.a.eigen();
        let top = vals.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
        let rep = convexity_check(&u, &cert, &[0.0, 0.0], &vecs[top], 0.0).unwrap();
        eprintln!("{name}: ratio {:.3e} min D_ee u {:.3e}", rep.ratio, rep.min_d_ee_u);
        assert!(rep.holds);
        reports.push(rep);
    }
    assert!(!reports.is_empty());
    assert_eq!(smallest_c_test(&reports), 0.0);
}
