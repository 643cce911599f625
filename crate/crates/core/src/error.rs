use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fields live on different quadrature grids")]
    GridMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis is not orthonormal under the grid quadrature (Gram deviation {0:.3e})")]
    NonOrthonormal(f64),

    #[error("degenerate linear system: {0}")]
    Degenerate(String),

    #[error("value {value} outside the potential domain ({lower}, {upper})")]
    DomainViolation { value: f64, lower: f64, upper: f64 },

    #[error("no separation interval: {0}")]
    NoSeparationInterval(String),

    #[error("Newton did not converge at step {step}: residual {residual:.3e} after {iterations} iterations")]
    NewtonFailure {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("separation failure at step {step}: phi collapsed onto the domain boundary")]
    SeparationFailure { step: usize },

    #[error("singular step matrix at step {step}")]
    SingularStep { step: usize },

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Step index carried by solver failures, if any.
    pub fn step_index(&self) -> Option<usize> {
        match self {
            Error::NewtonFailure { step, .. }
            | Error::SeparationFailure { step }
            | Error::SingularStep { step } => Some(*step),
            _ => None,
        }
    }
}
