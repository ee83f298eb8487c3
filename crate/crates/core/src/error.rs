use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ParseError: line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ValidationError: {element} {index}: {message}")]
    Validation {
        element: &'static str,
        index: usize,
        message: String,
    },

    #[error("LimitExceeded: {0}")]
    LimitExceeded(String),

    #[error("ConnectivityMismatch: mesh {0} has a different face list")]
    ConnectivityMismatch(usize),

    #[error("DimensionMismatch: {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("DegenerateTriangle: face {face} has area {area:e}")]
    DegenerateTriangle { face: usize, area: f64 },

    #[error("ConvergenceFailure: {0}")]
    ConvergenceFailure(String),

    #[error("KernelMismatch: field {0} uses a different kernel")]
    KernelMismatch(usize),

    #[error("SingularSystem: {0}")]
    SingularSystem(String),

    #[error("SingleClassError: both classes must be present")]
    SingleClass,

    #[error("NonPositivePenalty: {0}")]
    NonPositivePenalty(String),

    #[error("MissingGeometry: {0}")]
    MissingGeometry(String),

    #[error("RankDeficiency: requested {requested} components, numerical rank is {rank}")]
    RankDeficiency { requested: usize, rank: usize },

    #[error("SingularCovariance: pooled within-class covariance is singular")]
    SingularCovariance,

    #[error("BasisTooSmall: need {needed} eigenfunctions, basis has {available}")]
    BasisTooSmall { needed: usize, available: usize },

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),

    #[error("UnknownMethod: {0}")]
    UnknownMethod(String),

    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),

    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceFailure(_)
                | Error::SingularSystem(_)
                | Error::SingularCovariance
                | Error::RankDeficiency { .. }
        )
    }

    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
