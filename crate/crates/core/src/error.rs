use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{0} does not define a valid kernel")]
    UnsupportedKernel(String),

    #[error("coefficient adjustment requires alpha > 0 (alpha[{index}] = {value})")]
    NonPositiveCoefficient { index: usize, value: f64 },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("kernel matrix is identically zero")]
    ZeroKernel,

    #[error("within-class scatter is degenerate (tr(S_W) = {trace:e})")]
    DegenerateScatter { trace: f64 },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("class pair ({0}, {1}): {2}")]
    PairFailed(usize, usize, Box<Error>),

    #[error("objective became non-finite at iteration {iteration} (alpha = {alpha:?})")]
    NonFinite { iteration: usize, alpha: Vec<f64> },

    #[error("class {label} has {count} samples, {required} required")]
    InsufficientClassSamples {
        label: usize,
        count: usize,
        required: usize,
    },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("covariance is rank deficient (min eigenvalue {min_eigenvalue:e})")]
    DegenerateCovariance { min_eigenvalue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
