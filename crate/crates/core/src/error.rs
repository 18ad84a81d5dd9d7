use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("precoder support does not match the cluster layout")]
    SupportMismatch,

    #[error("BS {bs} and UT {ut} coincide in 3-D")]
    CoincidentNodes { bs: usize, ut: usize },

    #[error("zero-norm channel between BS {bs} and UT {ut}")]
    ZeroChannel { bs: usize, ut: usize },

    #[error("non-finite value at iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: String },

    #[error("bisection failed: {0}")]
    Bisection(String),

    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config value out of range: {key} = {value} ({reason})")]
    ConfigRange {
        key: String,
        value: String,
        reason: String,
    },

    #[error("unknown solver `{0}`")]
    UnknownSolver(String),

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Scenario(_) => "scenario",
            Error::InvalidArgument(_) => "argument",
            Error::Dimension { .. } => "dimension",
            Error::SupportMismatch => "support",
            Error::CoincidentNodes { .. } => "geometry",
            Error::ZeroChannel { .. } => "zero_channel",
            Error::NonFinite { .. } => "non_finite",
            Error::Bisection(_) => "bisection",
            Error::ConfigParse { .. } => "config_parse",
            Error::ConfigRange { .. } => "config_range",
            Error::UnknownSolver(_) => "unknown_solver",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}
