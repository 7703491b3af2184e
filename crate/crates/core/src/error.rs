use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("p_last = 0 requires the trivial-solution path (or a positive regularization floor)")]
    DegenerateDirection,
    #[error("W does not change sign on the grid (min {min}, max {max}); increase psi_amplitude")]
    NoSignChange { min: f64, max: f64 },
    #[error("no sign change of Hbar - A*F on [{lo}, {hi}] (g = {g_lo}, {g_hi}); widen the bracket")]
    NoBracket { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("solver diverged at iteration {iteration}: residual {residual} (initial {initial})")]
    Diverged { iteration: usize, residual: f64, initial: f64 },
    #[error("linear solve failed: {0}")]
    Linear(String),
    #[error("evolution unstable at t = {t}: sup|v| = {sup} exceeds {limit}")]
    Unstable { t: f64, sup: f64, limit: f64 },
    #[error("estimate invalid: {0}")]
    InvalidEstimate(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { key: key.to_string(), reason: reason.into() }
    }
}
