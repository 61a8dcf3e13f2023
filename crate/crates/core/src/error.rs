use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sketch shape: m = {m}, n = {n} (need 1 <= m <= n)")]
    InvalidShape { m: usize, n: usize },

    #[error("rows are not orthonormal (max defect {defect:e})")]
    NotOrthonormal { defect: f64 },

    #[error("moment order p = {0} is outside (2, inf)")]
    InvalidMomentOrder(f64),

    #[error("absolute moment order p = {0} must be positive and finite")]
    InvalidAbsMomentOrder(f64),

    #[error("slack eps = {eps} must lie in (0, {upper})")]
    InvalidSlack { eps: f64, upper: f64 },

    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("small-column set is empty")]
    EmptyColumnSet,

    #[error("mixture weights invalid: {0}")]
    InvalidWeights(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("chi-square divergence overflows f64 (log(1 + chi2) = {log1p_chi2})")]
    Overflow { log1p_chi2: f64 },

    #[error("{name} must be in {range}, got {value}")]
    OutOfRange {
        name: &'static str,
        range: &'static str,
        value: f64,
    },

    #[error("rejection sampler exhausted {0} attempts without acceptance")]
    RetriesExhausted(usize),

    #[error("need at least {min} trials, got {got}")]
    TooFewTrials { min: usize, got: usize },

    #[error("malformed matrix dump: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
