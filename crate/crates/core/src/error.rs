use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0} (supported: 1..=3 for matrices, 2..=3 for grids)")]
    UnsupportedDimension(usize),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("operator kind `{0}` is not differentiable")]
    NonSmooth(&'static str),

    #[error("root bracket failure: {0}")]
    Bracket(String),

    #[error("coefficient spectrum [{min}, {max}] outside [1/Λ, Λ] with Λ = {lambda}")]
    SpectrumOutOfBounds { min: f64, max: f64, lambda: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("node {0} lies on the grid boundary")]
    BoundaryNode(usize),

    #[error("sample point outside the source domain")]
    OutsideDomain,

    #[error("ball of radius {radius} contains no grid nodes")]
    EmptyBall { radius: f64 },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("boundary data must be nonnegative (min {0})")]
    NegativeBoundary(f64),

    #[error("rank-deficient least-squares system ({0} nodes)")]
    RankDeficient(usize),

    #[error("matrix too far from the constraint set: {0}")]
    TooFar(String),

    #[error("polynomial carries no class tag")]
    Untagged,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("hypotheses not met: {0}")]
    Hypotheses(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
