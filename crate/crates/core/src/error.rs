use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a linear system for the RBF coefficients could not be solved.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {required} points to fit a {dim}-d surrogate, got {got}")]
    TooFewPoints { got: usize, required: usize, dim: usize },
    #[error("system matrix is singular (zero pivot at column {column})")]
    Singular { column: usize },
    #[error("system matrix is numerically rank deficient (reciprocal condition {rcond:e} < {threshold:e})")]
    IllConditioned { rcond: f64, threshold: f64 },
    #[error("non-finite value in training data")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} = {value} outside [{lo}, {hi}]")]
    OutOfBounds { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown model id `{0}`")]
    UnknownModel(String),
    #[error("empty data set")]
    EmptyData,
    #[error("fit failed: {0}")]
    Fit(#[from] FitError),
    #[error("training failed: every candidate fit failed (last error: {0})")]
    TrainFailure(FitError),
    #[error("model evaluation failed: {0}")]
    Model(String),
    #[error("malformed document: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
