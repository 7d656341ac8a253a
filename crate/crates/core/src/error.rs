use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("model `{0}` has no path stepper")]
    NoStepper(String),

    #[error("simulated value {value} left the state space ({lo}, {hi}) at tick {tick}")]
    LeftStateSpace { value: f64, lo: f64, hi: f64, tick: usize },

    #[error("block ratio {ratio} does not divide fine path length {len}")]
    RatioMismatch { ratio: usize, len: usize },

    #[error("negative integrated volatility {value} in block {index}")]
    NegativeIntegral { index: usize, value: f64 },

    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("degenerate estimation domain: all values equal {0}")]
    DegenerateDomain(f64),

    #[error("value {0} outside [0, 1]")]
    OutsideUnitInterval(f64),

    #[error("basis index must be at least 1")]
    BadBasisIndex,

    #[error("no regression point falls inside the estimation domain")]
    EmptyDomain,

    #[error("non-finite response at index {0}")]
    NonFinite(usize),

    #[error("no feasible model in the collection")]
    NoFeasibleModel,

    #[error("config error at line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config error at `{key}`: {message}")]
    ConfigInvalid { key: String, message: String },

    #[error("too many failed replications: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } | Error::UnknownModel(_) => "invalid-parameter",
            Error::ConfigSyntax { .. } | Error::ConfigInvalid { .. } => "config",
            Error::Malformed { .. } | Error::Csv(_) => "input",
            Error::Io(_) => "io",
            Error::Json(_) => "output",
            Error::TooManyFailures { .. } => "failed-run",
            _ => "estimation",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
