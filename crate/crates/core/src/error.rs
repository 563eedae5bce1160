use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Every variant maps onto one of the CLI exit codes through [`Error::exit_code`]:
/// `1` usage, `2` data, `3` numerical.
#[derive(Debug, Error)]
pub enum Error {
    #[error("design matrix is rank deficient (column {column} is collinear with earlier columns)")]
    RankDeficient { column: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too few observations: need at least {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("argument outside the domain of the function: {0}")]
    DomainError(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("non-positive denominator in the recalculation ratio ({value})")]
    NonPositiveDenominator { value: f64 },

    #[error("both treatment arms must be present (only arm {present} observed)")]
    SingleArm { present: u8 },

    #[error("covariance matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("column `{column}` looks like a treatment indicator; blinded recalculation refuses arm labels")]
    ArmColumnPresent { column: String },

    #[error("arm column `{column}` not found in data")]
    MissingArmColumn { column: String },

    #[error("column `{0}` not found in data")]
    MissingColumn(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid configuration at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) | Error::InvalidDesign(_) | Error::Config { .. } => 1,
            Error::RankDeficient { .. }
            | Error::NonPositiveDenominator { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::DomainError(_) => 3,
            _ => 2,
        }
    }
}
