use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("operation undefined at the singular point x = 0")]
    SingularPoint,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate kernel: gradient vanishes on every sample")]
    DegenerateKernel,
    #[error("density has no cell with positive mass at mesh {mesh}")]
    EmptySupport { mesh: f64 },
    #[error("rejection sampling acceptance rate {rate:.3e} is below 1e-4")]
    IllConditionedDensity { rate: f64 },
    #[error("statistic undefined: {0}")]
    UndefinedStatistic(&'static str),
    #[error("state diverged after t = {last_good_time}")]
    Diverged { last_good_time: f64 },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("problem size {pairs} pairs exceeds the configured limit {limit}")]
    Capacity { pairs: usize, limit: usize },
    #[error("empty chaos regime: lower bound for gamma is {gamma_lo} >= 1")]
    EmptyRegime { gamma_lo: f64 },
    #[error("study invalid: {0}")]
    StudyInvalid(String),
    #[error("insufficient trials: {0}")]
    InsufficientTrials(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
