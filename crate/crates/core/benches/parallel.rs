use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fblab_core::freeboundary::{extract_contact, min_diameter};
use fblab_core::solver::{operator_field, solve_obstacle_with, Dirichlet, SolverOptions};
use fblab_core::{par, EllipticOperator, Fixture, Grid, Method};

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn run<R>(seq: bool, f: impl FnOnce() -> R) -> R {
    if seq {
        par::sequential(f)
    } else {
        f()
    }
}

fn sweep_solve(c: &mut Criterion) {
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 129, 1.0).unwrap();
    let b = Fixture::from_name("stratum0", &op).unwrap().field(g);
    let problem = Dirichlet::boxed(&b);
    let opts = SolverOptions {
        max_iter: Some(200),
        nested: false,
        ..SolverOptions::default()
    };
    let mut group = c.benchmark_group("projected_sweep_200");
    group.sample_size(10);
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |bch| {
            // Capped sweeps end in NonConvergence; only the work is timed.
            bch.iter(|| run(seq, || solve_obstacle_with(&op, &problem, Method::ProjectedSweep, &opts).ok()))
        });
    }
    group.finish();
}

fn diameter(c: &mut Criterion) {
    let op = EllipticOperator::trace(2);
    let g = Grid::new(2, 257, 1.0).unwrap();
    let e = extract_contact(&Fixture::from_name("halfspace", &op).unwrap().field(g));
    let pts = e.points();
    let mut group = c.benchmark_group("min_diameter");
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| run(seq, || min_diameter(&pts, 2, &[0.0, 0.0], 0.25).unwrap()))
        });
    }
    group.finish();
}

fn stencil_apply(c: &mut Criterion) {
    let op = EllipticOperator::bellman(
        vec![
            fblab_core::SymMatrix::identity(2),
            fblab_core::SymMatrix::diag(&[1.5, 0.7]),
        ],
        0.05,
    )
    .unwrap();
    let g = Grid::new(2, 513, 1.0).unwrap();
    let u = Fixture::from_name("stratum0", &op).unwrap().field(g);
    let mut group = c.benchmark_group("operator_field_513");
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| run(seq, || operator_field(&op, &u)))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep_solve, diameter, stencil_apply);
criterion_main!(benches);
