//! Discrete obstacle problem `min(u, 1 − F(D²_h u)) = 0` and the
//! unconstrained Dirichlet problem `F(D²_h h) = 1`.
//!
//! Two independent routes solve the obstacle problem: penalization with
//! continuation followed by a semismooth active-set polish ([`newton`]), and
//! projected nonlinear SOR in multicolor order ([`sweep`]). Both run inside
//! the same nested-iteration hierarchy for box problems.

mod comparison;
mod newton;
pub mod stencil;
mod sweep;

use serde::{Deserialize, Serialize};

pub use comparison::{comparison_check, ComparisonReport};

use crate::error::{Error, Result};
use crate::grid::{hessian_stencil, Grid, ScalarField};
use crate::operator::EllipticOperator;
use crate::par;

/// Solution method for the obstacle problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Penalization,
    ProjectedSweep,
    /// Damped Newton on `F(D²h) = rhs` (unconstrained problems only).
    Newton,
    /// Nonlinear SOR without projection (unconstrained problems only).
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Newton steps or sweeps on the finest level.
    pub iterations: usize,
    /// Max over free nodes of the discrete-equation defect.
    pub residual: f64,
    /// Fraction of nodes with `u ≤ h²` (0 for unconstrained solves).
    pub active_fraction: f64,
    pub method: Method,
    /// Number of nested-iteration levels used.
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Stopping tolerance on the defect, in units of `F`.
    pub tol: f64,
    /// Cap on Newton steps (per continuation level) or sweeps.
    pub max_iter: Option<usize>,
    pub nested: bool,
    /// Relaxation factor for sweeps; defaults to the Laplacian optimum.
    pub omega: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: None,
            nested: true,
            omega: None,
        }
    }
}

/// Dirichlet problem on a grid: nodes with `fixed[i]` keep `data.values[i]`.
/// Grid-boundary nodes are always fixed.
#[derive(Debug, Clone)]
pub struct Dirichlet {
    pub data: ScalarField,
    pub fixed: Vec<bool>,
}

impl Dirichlet {
    /// Box problem: the grid boundary carries the data.
    pub fn boxed(boundary: &ScalarField) -> Self {
        let g = boundary.grid;
        Self {
            data: boundary.clone(),
            fixed: (0..g.len()).map(|i| g.is_boundary(i)).collect(),
        }
    }

    /// Everything outside the open ball `B_r(center)` is fixed.
    pub fn ball(data: &ScalarField, center: &[f64], r: f64) -> Self {
        let g = data.grid;
        let fixed = (0..g.len())
            .map(|i| {
                let x = g.node_point(i);
                let d2: f64 = (0..g.dim).map(|a| (x[a] - center[a]).powi(2)).sum();
                g.is_boundary(i) || d2.sqrt() >= r
            })
            .collect();
        Self {
            data: data.clone(),
            fixed,
        }
    }
}

/// One level of the nested hierarchy.
pub(crate) struct Level {
    pub grid: Grid,
    pub free: Vec<bool>,
    pub data: Vec<f64>,
    pub colors: Vec<Vec<usize>>,
}

impl Level {
    fn new(grid: Grid, fixed: &[bool], data: Vec<f64>) -> Self {
        let free: Vec<bool> = (0..grid.len())
            .map(|i| !fixed[i] && !grid.is_boundary(i))
            .collect();
        let colors = stencil::colored(&grid, &free);
        Self {
            grid,
            free,
            data,
            colors,
        }
    }

    fn coarsen(&self) -> Option<Level> {
        let n = self.grid.n;
        if (n - 1) % 4 != 0 || (n - 1) / 2 + 1 < 17 {
            return None;
        }
        let gc = Grid::new(self.grid.dim, (n - 1) / 2 + 1, self.grid.half_width).ok()?;
        let map = |ic: usize| {
            let mi = gc.multi_index(ic);
            self.grid.index(&[2 * mi[0], 2 * mi[1], 2 * mi[2]])
        };
        let fixed: Vec<bool> = (0..gc.len()).map(|ic| !self.free[map(ic)]).collect();
        let data = (0..gc.len()).map(|ic| self.data[map(ic)]).collect();
        Some(Level::new(gc, &fixed, data))
    }

    /// Fixed values, zero elsewhere.
    fn initial(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| if self.free[i] { 0.0 } else { self.data[i] })
            .collect()
    }

    /// Cubic prolongation of a coarse solution onto this level's free nodes.
    fn prolong(&self, coarse: &Level, uc: Vec<f64>, clamp: bool) -> Result<Vec<f64>> {
        let fc = ScalarField {
            grid: coarse.grid,
            values: uc,
        };
        let g = self.grid;
        par::map_range(g.len(), |i| {
            if !self.free[i] {
                return Ok(self.data[i]);
            }
            let x = g.node_point(i);
            let v = fc.interpolate(&x[..g.dim])?;
            Ok(if clamp { v.max(0.0) } else { v })
        })
        .into_iter()
        .collect()
    }

    pub fn h2(&self) -> f64 {
        let h = self.grid.h();
        h * h
    }
}

/// Problem kind solved on a [`Level`].
#[derive(Clone, Copy)]
pub(crate) enum Kind {
    Obstacle,
    Unconstrained { rhs: f64 },
}

/// Defect at a free node: `|min(u/h², 1 − F(H u))|` or `|F(H u) − rhs|`.
#[inline]
pub(crate) fn node_defect(op: &EllipticOperator, lvl: &Level, u: &[f64], i: usize, kind: Kind) -> f64 {
    let f = op.eval_unchecked(&hessian_stencil(u, &lvl.grid, i));
    match kind {
        Kind::Obstacle => (u[i] / lvl.h2()).min(1.0 - f).abs(),
        Kind::Unconstrained { rhs } => (f - rhs).abs(),
    }
}

pub(crate) fn max_defect(op: &EllipticOperator, lvl: &Level, u: &[f64], kind: Kind) -> f64 {
    let free: Vec<usize> = (0..u.len()).filter(|&i| lvl.free[i]).collect();
    par::max_range(free.len(), |k| node_defect(op, lvl, u, free[k], kind)).max(0.0)
}

fn check_problem(op: &EllipticOperator, problem: &Dirichlet) -> Result<()> {
    let g = problem.data.grid;
    if op.dim() != g.dim {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: g.dim,
        });
    }
    if problem.fixed.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: problem.fixed.len(),
        });
    }
    Ok(())
}

fn solve_level(
    op: &EllipticOperator,
    lvl: &Level,
    u: &mut Vec<f64>,
    kind: Kind,
    method: Method,
    warm: bool,
    opts: &SolverOptions,
) -> Result<usize> {
    match method {
        Method::Penalization => newton::penalized(op, lvl, u, warm, opts),
        Method::Newton => {
            let Kind::Unconstrained { rhs } = kind else {
                unreachable!("newton route is unconstrained")
            };
            newton::unconstrained(op, lvl, u, rhs, opts)
        }
        Method::ProjectedSweep | Method::Sweep => sweep::solve(op, lvl, u, kind, opts),
    }
}

fn run(
    op: &EllipticOperator,
    problem: &Dirichlet,
    kind: Kind,
    method: Method,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveReport)> {
    check_problem(op, problem)?;
    let g = problem.data.grid;
    let mut levels = vec![Level::new(g, &problem.fixed, problem.data.values.clone())];
    if opts.nested {
        while let Some(c) = levels.last().unwrap().coarsen() {
            levels.push(c);
        }
    }
    let clamp = matches!(kind, Kind::Obstacle);
    let mut u = levels.last().unwrap().initial();
    let mut iterations = 0;
    for k in (0..levels.len()).rev() {
        if k + 1 < levels.len() {
            u = levels[k].prolong(&levels[k + 1], u, clamp)?;
        }
        let warm = k + 1 < levels.len();
        iterations = solve_level(op, &levels[k], &mut u, kind, method, warm, opts)?;
    }
    let lvl = &levels[0];
    let residual = max_defect(op, lvl, &u, kind);
    let h2 = lvl.h2();
    let active_fraction = match kind {
        Kind::Obstacle => u.iter().filter(|&&v| v <= h2).count() as f64 / u.len() as f64,
        Kind::Unconstrained { .. } => 0.0,
    };
    Ok((
        ScalarField { grid: g, values: u },
        SolveReport {
            iterations,
            residual,
            active_fraction,
            method,
            levels: levels.len(),
        },
    ))
}

/// Solves the obstacle problem with the grid boundary of `boundary` as data.
pub fn solve_obstacle(
    op: &EllipticOperator,
    boundary: &ScalarField,
    method: Method,
) -> Result<(ScalarField, SolveReport)> {
    solve_obstacle_with(op, &Dirichlet::boxed(boundary), method, &SolverOptions::default())
}

pub fn solve_obstacle_with(
    op: &EllipticOperator,
    problem: &Dirichlet,
    method: Method,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveReport)> {
    if !matches!(method, Method::Penalization | Method::ProjectedSweep) {
        return Err(Error::Precondition(format!(
            "{method:?} is not an obstacle-problem method"
        )));
    }
    if method == Method::Penalization && !op.is_smooth() {
        return Err(Error::NonSmooth(op.kind().name()));
    }
    let min = (0..problem.fixed.len())
        .filter(|&i| problem.fixed[i] || problem.data.grid.is_boundary(i))
        .map(|i| problem.data.values[i])
        .fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        return Err(Error::NegativeBoundary(min));
    }
    run(op, problem, Kind::Obstacle, method, opts)
}

/// Solves `F(D²h) = 1` with the grid boundary of `boundary` as data. Smooth
/// operators use Newton, Pucci operators use nonlinear sweeps.
pub fn solve_unconstrained(
    op: &EllipticOperator,
    boundary: &ScalarField,
) -> Result<(ScalarField, SolveReport)> {
    solve_dirichlet(op, &Dirichlet::boxed(boundary), 1.0, &SolverOptions::default())
}

/// Solves `F(D²h) = rhs` on the free nodes of `problem`.
pub fn solve_dirichlet(
    op: &EllipticOperator,
    problem: &Dirichlet,
    rhs: f64,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveReport)> {
    let method = if op.is_smooth() { Method::Newton } else { Method::Sweep };
    run(op, problem, Kind::Unconstrained { rhs }, method, opts)
}

/// Same as [`solve_dirichlet`] but with an explicit method choice.
pub fn solve_dirichlet_method(
    op: &EllipticOperator,
    problem: &Dirichlet,
    rhs: f64,
    method: Method,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveReport)> {
    match method {
        Method::Newton if !op.is_smooth() => Err(Error::NonSmooth(op.kind().name())),
        Method::Newton | Method::Sweep => run(op, problem, Kind::Unconstrained { rhs }, method, opts),
        _ => Err(Error::Precondition(format!(
            "{method:?} is not an unconstrained-problem method"
        ))),
    }
}

/// `F(D²_h u)` at every interior node (`NaN` on the grid boundary).
pub fn operator_field(op: &EllipticOperator, u: &ScalarField) -> Vec<f64> {
    let g = u.grid;
    par::map_range(g.len(), |i| {
        if g.is_boundary(i) {
            f64::NAN
        } else {
            op.eval_unchecked(&u.hessian_unchecked(i))
        }
    })
}

/// Default relaxation factor for `n` nodes per axis.
pub fn default_omega(n: usize) -> f64 {
    2.0 / (1.0 + (std::f64::consts::PI / (n - 1) as f64).sin())
}
