use thiserror::Error;

/// Errors raised while building scenarios, solving the backward systems or
/// running verification experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("volatility floor violated: sigma^2 = {value} < delta = {floor} ({location})")]
    FloorViolation {
        value: f64,
        floor: f64,
        location: String,
    },

    #[error("coefficient `{0}` is a Brownian function without a declared bound")]
    UnboundedCoefficient(String),

    #[error("coefficient `{0}` is not deterministic")]
    NotDeterministic(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {what} at path {path}, step {step}")]
    NonFinite {
        what: String,
        path: usize,
        step: usize,
    },

    #[error("regression normal equations are singular at step {step}")]
    SingularRegression { step: usize },

    #[error("step size too large at step {step}: |a dt| = {value} >= 1")]
    StepSizeTooLarge { step: usize, value: f64 },

    #[error("M too close to zero at step {step}, path {path}: {value}")]
    DegenerateM { step: usize, path: usize, value: f64 },

    #[error("P1 below positivity threshold at step {step}: {value}")]
    DegenerateP1 { step: usize, value: f64 },

    #[error("operator formulas disagree for {which}: max difference {max_diff:e}")]
    FormulaMismatch { which: String, max_diff: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient paths: standard error {se:e} exceeds requested {requested:e}")]
    InsufficientPaths { se: f64, requested: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
