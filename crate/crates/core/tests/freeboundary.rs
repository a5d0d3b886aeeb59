use fblab_core::freeboundary::{
    classify_point, extract_contact, min_diameter, thickness_profile, ClassifyOptions, PointClass,
};
use fblab_core::grid::Point;
use fblab_core::{solve_obstacle, EllipticOperator, Fixture, Grid, Method, ScalarField};
use proptest::prelude::*;

fn trace() -> EllipticOperator {
    EllipticOperator::trace(2)
}

#[test]
fn contact_of_fixtures() {
    let g = Grid::new(2, 65, 1.0).unwrap();
    let h = g.h();
    let op = trace();

    let p = Fixture::from_name("quadratic:1,0.5", &op).unwrap();
    let c = extract_contact(&p.field(g));
    let lmin = p.hessian_at_origin(2).unwrap().lambda_min();
    // {½x·Ax ≤ h²} is the origin plus at most a few neighbors.
    let reach = (2.0 / lmin).sqrt() * h;
    assert!(c.contains(g.center_index()));
    assert!(c.points().iter().all(|x| x[0].hypot(x[1]) <= reach + 1e-12));

    let hs = extract_contact(&Fixture::from_name("halfspace", &op).unwrap().field(g));
    assert!(hs.points().iter().all(|x| x[0] <= 2.0 * h));
    let below = (0..g.len()).filter(|&i| g.node_point(i)[0] <= 0.0).count();
    assert!(hs.nodes.len() >= below);
    assert!(hs.boundary_nodes.iter().all(|i| hs.contains(*i)));

    let z = extract_contact(&ScalarField::zeros(g));
    assert_eq!(z.nodes.len(), g.len());
    assert!(z.boundary_nodes.is_empty());
}

#[test]
fn min_diameter_examples() {
    let g = Grid::new(2, 129, 1.0).unwrap();
    let h = g.h();
    let pts: Vec<Point> = (0..g.len()).map(|i| g.node_point(i)).collect();
    let r = 0.5;

    let t = 8.0 * h;
    let slab: Vec<Point> = pts.iter().copied().filter(|x| x[0].abs() <= t + 1e-12).collect();
    let w = min_diameter(&slab, 2, &[0.0, 0.0], r).unwrap();
    assert!(w <= 2.0 * t * (1.0 + 1e-3) && w >= 2.0 * t - 1e-12);

    let half: Vec<Point> = pts.iter().copied().filter(|x| x[0] <= 0.0).collect();
    let w = min_diameter(&half, 2, &[0.0, 0.0], r).unwrap();
    assert!((w - r).abs() <= 2.0 * h);

    // Minimal width of a digital disc is its diameter.
    let w = min_diameter(&pts, 2, &[0.0, 0.0], r).unwrap();
    assert!((w - 2.0 * r).abs() <= 2.0 * h);
}

#[test]
fn thickness_examples() {
    let g = Grid::new(2, 129, 1.0).unwrap();
    let h = g.h();
    let op = trace();
    let radii: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|k| k * h).chain([0.375, 0.5]).collect();

    let top = extract_contact(&Fixture::from_name("top-stratum", &op).unwrap().field(g));
    let prof = thickness_profile(&top, &[0.0, 0.0], &radii).unwrap();
    assert!(prof.radii.windows(2).all(|w| w[0] > w[1]));
    for (r, d) in prof.radii.iter().zip(&prof.delta) {
        assert!(*d <= 2.0 * h / r + 1e-12, "r = {r}, δ = {d}");
    }

    let hs = extract_contact(&Fixture::from_name("halfspace", &op).unwrap().field(g));
    let prof = thickness_profile(&hs, &[0.0, 0.0], &radii).unwrap();
    for (r, d) in prof.radii.iter().zip(&prof.delta) {
        assert!((d - 1.0).abs() <= 4.0 * h / r, "r = {r}, δ = {d}");
        assert!((0.0..=2.0).contains(d));
    }

    let origin = extract_contact(&Fixture::from_name("quadratic:iso", &op).unwrap().field(g));
    let single = fblab_core::freeboundary::ContactSet {
        nodes: vec![g.center_index()],
        boundary_nodes: vec![],
        ..origin
    };
    let prof = thickness_profile(&single, &[0.0, 0.0], &radii).unwrap();
    assert!(prof.delta.iter().all(|&d| d == 0.0));

    assert!(thickness_profile(&hs, &[0.0, 0.0], &[h]).is_err());
}

#[test]
fn classification_of_fixtures() {
    let g = Grid::new(2, 257, 1.0).unwrap();
    let op = trace();
    let opts = ClassifyOptions::default();
    let field = |name: &str| Fixture::from_name(name, &op).unwrap().field(g);

    let c = classify_point(&field("halfspace"), &[0.0, 0.0], &opts).unwrap();
    assert_eq!(c.class, PointClass::Regular);
    assert!(c.halfspace_residual < c.q_residual);

    for name in ["top-stratum", "quadratic:1,0.5", "stratum0"] {
        let c = classify_point(&field(name), &[0.0, 0.0], &opts).unwrap();
        assert_eq!(c.class, PointClass::Singular, "{name}: δ = {}", c.delta_r_min);
    }

    let far = classify_point(&field("halfspace"), &[0.0, 0.95], &opts);
    assert!(far.is_err());
    let positive = classify_point(&field("halfspace"), &[0.5, 0.0], &opts);
    assert!(positive.is_err());
}

#[test]
fn thickness_at_singular_solver_output_decays_with_radius() {
    let g = Grid::new(2, 257, 1.0).unwrap();
    let h = g.h();
    let op = trace();
    let b = Fixture::from_name("stratum0", &op).unwrap().field(g);
    let (u, _) = solve_obstacle(&op, &b, Method::Penalization).unwrap();
    let c = classify_point(&u, &[0.0, 0.0], &ClassifyOptions::default()).unwrap();
    assert_eq!(c.class, PointClass::Singular);
    let contact = extract_contact(&u);
    let radii: Vec<f64> = (2..=16).map(|k| k as f64 * 8.0 * h).collect();
    let prof = thickness_profile(&contact, &[0.0, 0.0], &radii).unwrap();
    // Shrinking r never raises δ by more than the grid width of a blob.
    for w in prof.delta.windows(2).zip(prof.radii.windows(2)) {
        let (d, r) = w;
        let tol = 2.0 * (1e-3 * d[0] + 4.0 * h / r[1]);
        assert!(d[1] <= d[0] + tol, "δ({}) = {} vs δ({}) = {}", r[1], d[1], r[0], d[0]);
    }
}

fn cloud() -> impl Strategy<Value = Vec<Point>> {
    proptest::collection::vec((-0.4f64..0.4, -0.15f64..0.15), 3..40)
        .prop_map(|v| v.into_iter().map(|(a, b)| [a, b, 0.0]).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn min_diameter_is_rotation_equivariant(pts in cloud(), t in 0.0f64..6.3) {
        let rot: Vec<Point> = pts
            .iter()
            .map(|x| [t.cos() * x[0] - t.sin() * x[1], t.sin() * x[0] + t.cos() * x[1], 0.0])
            .collect();
        let a = min_diameter(&pts, 2, &[0.0, 0.0], 1.0).unwrap();
        let b = min_diameter(&rot, 2, &[0.0, 0.0], 1.0).unwrap();
        // Angular mesh π/720: the sampled minimum overshoots by at most
        // diam·(1 − cos(π/1440)) + diam·sin(π/1440).
        let diam = pts.iter().flat_map(|x| pts.iter().map(move |y| (x[0] - y[0]).hypot(x[1] - y[1]))).fold(0.0, f64::max);
        let tol = 1e-3 * a.max(b) + diam * (std::f64::consts::PI / 1440.0);
        prop_assert!((a - b).abs() <= tol, "{} vs {}", a, b);
        prop_assert!(a <= diam + 1e-12);
    }
}
