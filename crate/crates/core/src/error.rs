use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("unsupported order {order} (max {max})")]
    UnsupportedOrder { order: usize, max: usize },
    #[error("invalid weight exponent {0} (must be >= 0)")]
    InvalidWeight(f64),
    #[error("invalid Lebesgue exponent {0} (must be >= 1)")]
    InvalidExponent(f64),
    #[error("invalid gamma {0} (must be > 0)")]
    InvalidGamma(f64),
    #[error("jet of order {have} is too short, need order {need}")]
    InsufficientJet { have: usize, need: usize },
    #[error("mesh or component mismatch: {0}")]
    Mismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("linear solver failure: {0}")]
    SolverFailure(String),
    #[error("time step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),
    #[error("invalid gravity vector (|g| must be > 0)")]
    InvalidGravity,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("lambda calibration failed: {0}")]
    CalibrationFailure(String),
    #[error("successive approximation diverged: {0}")]
    Divergence(String),
    #[error("background: {0}")]
    Background(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
