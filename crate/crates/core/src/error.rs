use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid market: {0}")]
    InvalidMarket(String),
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("expectation backend does not match the market: {0}")]
    BackendMismatch(String),
    #[error("piecewise-quadratic and piecewise-linear values disagree at t={t}: {quadratic} vs {linear}")]
    ConsistencyError { t: usize, quadratic: f64, linear: f64 },
    #[error("target mean {target} is unattainable (C = 1 on the {branch} branch)")]
    TargetUnattainable { target: f64, branch: &'static str },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("mean excess return is the zero vector")]
    ZeroMeanExcess,
    #[error("not enough conditioning events: {0}")]
    InsufficientConditioningEvents(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
