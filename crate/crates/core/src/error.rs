use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("jump probability {value} at site ({i}, {j}) lies outside [0, 1]")]
    ProbabilityOutOfRange { i: u64, j: i64, value: f64 },

    #[error("time step {dt} exceeds the stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },

    #[error("field went negative ({value}) at node {node} after step {step}")]
    NegativeField { step: usize, node: usize, value: f64 },

    #[error("boundary mass {leak:e} exceeds {limit:e} of the total")]
    BoundaryLeak { leak: f64, limit: f64 },

    #[error("contour passes within {distance:e} of a pole at {pole}")]
    ContourTooClose { distance: f64, pole: String },

    #[error("truncation half-length {given} is below the required {required}")]
    InsufficientTruncation { required: f64, given: f64 },

    #[error("no sign change of f' on ({lo}, {hi})")]
    BracketFailure { lo: f64, hi: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the caller's configuration rather than by a
    /// numerical run going bad.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Unstable { .. }
                | Error::ContourTooClose { .. }
                | Error::InsufficientTruncation { .. }
        )
    }
}

/// Rejects non-finite values and values outside `(lo, hi)`.
pub(crate) fn check_open(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && value > lo && value < hi {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{value} is not in ({lo}, {hi})")))
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    check_open(name, value, 0.0, f64::INFINITY)
}
