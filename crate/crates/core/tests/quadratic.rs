use fblab_core::quadratic::{certify, fit_quadratic, linear_bound_check, project_to_class, ClassTag, QuadraticPoly};
use fblab_core::{solve_obstacle, EllipticOperator, Fixture, GammaDirection, Grid, Method, ScalarField, SymMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bellman() -> EllipticOperator {
    EllipticOperator::bellman(
        vec![
            SymMatrix::identity(2),
            SymMatrix::from_row_major(2, &[1.5, 0.4, 0.4, 0.8]).unwrap(),
        ],
        0.05,
    )
    .unwrap()
}

fn rotation(t: f64) -> [f64; 4] {
    [t.cos(), -t.sin(), t.sin(), t.cos()]
}

#[test]
fn fit_is_stable_under_uniform_noise() {
    let g = Grid::new(2, 129, 1.0).unwrap();
    let a = SymMatrix::from_row_major(2, &[0.6, 0.1, 0.1, 0.4]).unwrap();
    let clean = ScalarField::from_fn(g, |x| 0.5 * a.quad_form(&x[..2]));
    let eta = 1e-3;
    let r = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut noisy = clean.clone();
        for v in &mut noisy.values {
            *v += eta * rng.gen_range(-1.0..=1.0);
        }
        let p = fit_quadratic(&noisy, &[0.0, 0.0], r, false).unwrap();
        worst = worst.max((p.a - a).spectral_norm() * r * r / eta);
    }
    assert!(worst <= 50.0, "measured C = {worst}");
}

#[test]
fn halfspace_fit_lies_strictly_inside() {
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 129, 1.0).unwrap();
    let hs = Fixture::from_name("halfspace", &op).unwrap().field(g);
    let gamma = op.gamma_of(&GammaDirection::Along(vec![1.0, 0.0])).unwrap();
    for constrain in [false, true] {
        let p = fit_quadratic(&hs, &[0.0, 0.0], 0.5, constrain).unwrap();
        let a11 = p.a.get(0, 0);
        assert!(a11 > 0.05 * gamma && a11 < 0.95 * gamma, "a11 = {a11}");
    }
}

#[test]
fn certify_examples() {
    let g = Grid::new(2, 65, 1.0).unwrap();
    let h2 = g.h() * g.h();
    let op = EllipticOperator::trace(2);
    let a = fblab_core::fixtures::normalized_diag(&op, &[1.0, 0.5]).unwrap();
    let p = project_to_class(&a, &[0.0, 0.0], &op, ClassTag::Q).unwrap();
    let u = ScalarField::from_fn(g, |x| p.eval(&x[..2]));

    let c = certify(&u, &p, &[0.0, 0.0], 0.5, &op).unwrap();
    assert!(c.eps <= 1e-10 && c.member);
    assert!((c.convexity_floor - a.lambda_min()).abs() < 1e-9);

    let delta = 1e-3;
    let bumped = u.map(|x, v| v + delta * (x[0] * x[0] + x[1] * x[1]));
    let c = certify(&bumped, &p, &[0.0, 0.0], 0.5, &op).unwrap();
    assert!((c.eps - delta).abs() < 1e-12);
    assert!((c.convexity_floor - (a.lambda_min() + 2.0 * delta)).abs() < 1e-9);

    let hs = Fixture::from_name("halfspace", &op).unwrap().field(g);
    let gamma = op.gamma_of(&GammaDirection::Along(vec![1.0, 0.0])).unwrap();
    let top = project_to_class(&SymMatrix::diag(&[gamma, 0.0]), &[0.0, 0.0], &op, ClassTag::Q).unwrap();
    let c = certify(&hs, &top, &[0.0, 0.0], 0.5, &op).unwrap();
    assert!((c.eps - gamma / 2.0).abs() < 1e-9);
    assert!(c.convexity_floor.abs() < 1e-9);

    // Solver output with boundary p is certified at the grid floor.
    let (us, _) = solve_obstacle(&op, &u, Method::Penalization).unwrap();
    let c = certify(&us, &p, &[0.0, 0.0], 1.0, &op).unwrap();
    assert!(c.eps <= 5.0 * h2);

    let untagged = QuadraticPoly::homogeneous(a);
    assert!(certify(&u, &untagged, &[0.0, 0.0], 0.5, &op).is_err());
}

fn any_psd() -> impl Strategy<Value = SymMatrix> {
    (0.05f64..1.0, 0.0f64..1.0, 0.0f64..std::f64::consts::PI).prop_map(|(l1, l2, t)| {
        let r = rotation(t);
        SymMatrix::diag(&[l1, l2]).congruence(&r)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_rotation_equivariant(m in any_psd(), t in 0.0f64..6.3) {
        let g = Grid::new(2, 33, 1.0).unwrap();
        let r = rotation(t);
        let u = ScalarField::from_fn(g, |x| {
            let y = [r[0] * x[0] + r[1] * x[1], r[2] * x[0] + r[3] * x[1]];
            0.5 * m.quad_form(&y)
        });
        let p = fit_quadratic(&u, &[0.0, 0.0], 0.5, true).unwrap();
        prop_assert!(p.a.max_abs_diff(&m.congruence(&r)) < 1e-8);
    }

    #[test]
    fn projection_is_idempotent_and_lands_in_class(
        m in any_psd(),
        noise in proptest::array::uniform3(-0.03f64..0.03),
        use_bellman in any::<bool>(),
    ) {
        let op = if use_bellman { bellman() } else { EllipticOperator::trace(2) };
        let base = fblab_core::fixtures::normalized(&op, &m).unwrap();
        let mut pert = base;
        pert.set(0, 0, base.get(0, 0) + noise[0]);
        pert.set(0, 1, base.get(0, 1) + noise[1]);
        pert.set(1, 1, base.get(1, 1) + noise[2]);
        for tag in [ClassTag::Q, ClassTag::UQ] {
            let p = project_to_class(&pert, &[0.01, -0.02], &op, tag).unwrap();
            prop_assert!(p.validate(&op).is_ok());
            prop_assert!((op.eval_unchecked(&p.a) - 1.0).abs() <= 1e-12);
            let gamma = op.gamma_of(&GammaDirection::Isotropic).unwrap();
            prop_assert!(p.a.lambda_max() <= op.lambda() * gamma * 2.0);
            let again = project_to_class(&p.a, &p.b, &op, tag).unwrap();
            prop_assert_eq!(&again, &p);
        }
    }

    #[test]
    fn zero_linear_term_always_passes(m in any_psd(), eps in 1e-4f64..0.5) {
        let op = EllipticOperator::trace(2);
        let p = project_to_class(&m, &[0.0, 0.0], &op, ClassTag::UQ);
        if let Ok(p) = p {
            prop_assert!(linear_bound_check(&p, eps).unwrap());
        }
    }
}
