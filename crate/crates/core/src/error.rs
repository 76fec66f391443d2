use thiserror::Error;

/// Errors raised by the geometric, cone and optimization layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("tangent vector is expressed in chart `{found}`, expected `{expected}`")]
    ChartMismatch { expected: String, found: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension {0} exceeds the supported limit of {1}")]
    DimensionTooLarge(usize, usize),
    #[error("index {0} out of range (limit {1})")]
    IndexOutOfRange(usize, usize),
    #[error("point is not in the constraint set")]
    NotInSet,
    #[error("point is infeasible: g(p) is not in K")]
    InfeasiblePoint,
    #[error("corner data validation failed: {0}")]
    ValidationFailure(String),
    #[error(
        "no Lagrange multiplier: stationarity residual {residual:.3e} above tolerance {tol:.3e}"
    )]
    NoMultiplier { residual: f64, tol: f64 },
    #[error("certificate is not valid at this point: {0}")]
    InvalidCertificate(String),
    #[error("pulled-back Lagrangian is not stationary: gradient norm {0:.3e}")]
    NotStationary(f64),
    #[error("quadratic subproblem is infeasible")]
    QpInfeasible,
    #[error("line search failed after {0} halvings")]
    LineSearchFailure(usize),
    #[error("solver breakdown: {0}")]
    Breakdown(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("linear program failed: {0}")]
    Lp(String),
}

pub type Result<T> = std::result::Result<T, Error>;
