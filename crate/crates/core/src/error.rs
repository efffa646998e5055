use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Elimination could not find a usable kernel direction.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Loss or parameters became non-finite at the given step.
    #[error("optimizer diverged at step {step}")]
    Diverged { step: usize },

    /// The rank-1 secant cannot be formed because the step was zero in every coordinate.
    #[error("degenerate secant step: every coordinate moved by at most {guard:e}")]
    DegenerateStep { guard: f64 },

    #[error("block Lipschitz constants are required for the {0} partition")]
    MissingLipschitz(String),

    #[error("operation requires a least-squares model")]
    WrongModel,

    #[error("block Hessian is singular even after ridge regularisation")]
    SingularBlockHessian,

    #[error("unsupported block rule `{0}`")]
    UnsupportedRule(String),

    #[error("feature expansion would produce {count} columns (cap {cap})")]
    Overflow { count: usize, cap: usize },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}, column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
