use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("edge ({u}, {v}) has an endpoint outside 0..{n_vertices}")]
    InvalidEdge { u: usize, v: usize, n_vertices: usize },

    #[error("vertex map is invalid: {0}")]
    InvalidVertexMap(String),

    #[error("no perfect matching exists on {0} half-edges (odd count)")]
    NoMatchingExists(usize),

    #[error("not a valid matching: {0}")]
    InvalidMatching(String),

    #[error("rejection sampler exhausted its budget of {0} attempts")]
    RejectionBudgetExhausted(usize),

    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("non-backtracking operator is reducible")]
    ReducibleOperator,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("graph is not {0}-regular")]
    NotRegular(usize),

    #[error("empty sample: at least one trial is required")]
    EmptySample,

    #[error("enumeration budget of {0} partial paths exceeded")]
    EnumerationBudget(u64),

    #[error("precondition violated: {0}")]
    PreconditionFailed(String),

    #[error("graph is tangled at radius {0}")]
    PreconditionTangled(usize),

    #[error("kernel hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("base eigenvalue {re}{im:+}i has no partner within tolerance (nearest at distance {distance:e})")]
    ContainmentViolation { re: f64, im: f64, distance: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }
}
