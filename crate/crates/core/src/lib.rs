//! Numerical laboratory for the obstacle problem `F(D²u) = χ_{u>0}` with
//! convex fully nonlinear elliptic operators.

pub mod blowup;
pub mod error;
pub mod fixtures;
pub mod freeboundary;
pub mod grid;
pub mod linalg;
pub mod operator;
pub mod par;
pub mod quadratic;
pub mod solver;
pub mod thin;
pub mod verification;

pub use error::{Error, Result};
pub use fixtures::Fixture;
pub use grid::{Grid, Point, ScalarField};
pub use linalg::SymMatrix;
pub use operator::{EllipticOperator, GammaDirection, OperatorConfig, OperatorKind};
pub use solver::{solve_obstacle, solve_unconstrained, Method, SolveReport};
