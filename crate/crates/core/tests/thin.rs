use fblab_core::fixtures::three_half;
use fblab_core::thin::{classify_thin, frequency, frequency_of_field, solve_thin, Possibility, ThinOptions};
use fblab_core::{EllipticOperator, Fixture, Grid, ScalarField};

const RADII: [f64; 6] = [0.125, 0.25, 0.375, 0.5, 0.625, 0.75];

fn thin(name: &str, n: usize) -> (ScalarField, fblab_core::thin::ThinSolution) {
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, n, 1.0).unwrap();
    let exact = Fixture::from_name(name, &op).unwrap().field(g);
    let s = solve_thin(&exact, &ThinOptions::default()).unwrap();
    (exact, s)
}

fn check_contract(s: &fblab_core::thin::ThinSolution, tol: f64) {
    let g = s.field.grid;
    let lap = s.laplacian();
    for i in 0..g.len() {
        if g.is_boundary(i) {
            continue;
        }
        let v = s.field.values[i];
        assert!(lap[i] <= tol, "Δv = {} at {:?}", lap[i], g.node_point(i));
        if s.is_line_node(i) {
            assert!(v >= -tol);
            if v > tol {
                assert!(lap[i].abs() <= tol);
            }
        } else {
            assert!(lap[i].abs() <= tol);
        }
    }
}

#[test]
fn linear_fixture_is_reproduced() {
    let (exact, s) = thin("thin:linear", 129);
    let h = exact.grid.h();
    assert!(s.field.max_abs_diff(&exact) <= 5.0 * h * h);
    check_contract(&s, 1e-6);
}

#[test]
fn three_half_fixture_is_reproduced() {
    let (exact, s) = thin("thin:threehalf", 257);
    let h = exact.grid.h();
    let err = s.field.max_abs_diff(&exact);
    assert!(err <= 10.0 * h, "err = {err}");
    check_contract(&s, 1e-6);
    // Contact on the lower half of the line, positivity on the upper half.
    assert!(s.field.value_at_point(&[0.0, -0.5]).abs() <= 1e-9);
    assert!(s.field.value_at_point(&[0.0, 0.5]) > 0.3);
}

#[test]
fn constant_data_stays_constant() {
    let g = Grid::new(2, 65, 1.0).unwrap();
    let s = solve_thin(&ScalarField::from_fn(g, |_| 1.0), &ThinOptions::default()).unwrap();
    assert!(s.field.values.iter().all(|v| (v - 1.0).abs() <= 1e-10));
}

#[test]
fn three_d_is_rejected() {
    let g = Grid::new(3, 17, 1.0).unwrap();
    assert!(solve_thin(&ScalarField::zeros(g), &ThinOptions::default()).is_err());
}

#[test]
fn frequencies_of_homogeneous_fixtures() {
    for (name, n, expect, tol, poss) in [
        ("thin:linear", 129, 1.0, 1e-2, Possibility::One),
        ("thin:x1x2", 129, 2.0, 1e-2, Possibility::Three),
        ("thin:threehalf", 513, 1.5, 0.05, Possibility::Two),
    ] {
        let (_, s) = thin(name, n);
        let p = frequency(&s, &RADII).unwrap();
        eprintln!("{name}: {:?}", p.frequency);
        for f in &p.frequency {
            assert!((f - expect).abs() <= tol, "{name}: N = {f}");
        }
        assert!(p.max_decrease() <= 1e-2, "{name}");
        assert_eq!(classify_thin(&p).unwrap(), poss);
    }
}

#[test]
fn frequency_quadrature_matches_closed_form() {
    // Oracle: N = degree for homogeneous data, sampled straight from the formula.
    let g = Grid::new(2, 513, 1.0).unwrap();
    let f = ScalarField::from_fn(g, |x| three_half(x[0], x[1]));
    let p = frequency_of_field(&f, &[0.0, 0.0], &RADII).unwrap();
    assert!(p.frequency.iter().all(|n| (n - 1.5).abs() <= 0.02), "{:?}", p.frequency);
    // v(λx) has the frequency of v at λr.
    let lam = 0.5;
    let scaled = ScalarField::from_fn(g, |x| x[0] * x[1] + (lam * x[0]).powi(3) - 3.0 * lam * x[0] * (lam * x[1]).powi(2));
    let base = ScalarField::from_fn(g, |x| x[0] * x[1] / (lam * lam) + x[0].powi(3) - 3.0 * x[0] * x[1] * x[1]);
    let a = frequency_of_field(&scaled, &[0.0, 0.0], &[0.5]).unwrap().frequency[0];
    let b = frequency_of_field(&base, &[0.0, 0.0], &[0.25]).unwrap().frequency[0];
    assert!((a - b).abs() <= 1e-3, "{a} vs {b}");
}

#[test]
fn frequency_preconditions() {
    let g = Grid::new(2, 65, 1.0).unwrap();
    let one = ScalarField::from_fn(g, |_| 1.0);
    assert!(frequency_of_field(&one, &[0.0, 0.0], &[0.5]).is_err());
    let zero = ScalarField::zeros(g);
    assert!(frequency_of_field(&zero, &[0.0, 0.0], &[0.5]).is_err());
    let lin = ScalarField::from_fn(g, |x| x[0]);
    assert!(frequency_of_field(&lin, &[0.0, 0.0], &[1.5]).is_err());
}
