use thiserror::Error;

/// Errors raised by the model and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time step too large: per-step loss probability {p:.4} exceeds {limit}")]
    StepTooLarge { p: f64, limit: f64 },

    #[error("measurement {phi} lies {sigmas:.1} sigma away from every supported atom number")]
    LikelihoodCollapse { phi: f64, sigmas: f64 },

    #[error("degenerate demodulation window {index}: both quadratures vanish")]
    DegenerateWindow { index: usize },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("undefined for a zero-mean distribution")]
    ZeroMean,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Rejects NaN and anything outside `[lo, hi]`.
pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_nan() || value < lo || value > hi {
        return Err(invalid(name, format!("{value} not in [{lo}, {hi}]")));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0) {
        return Err(invalid(name, format!("{value} must be > 0")));
    }
    Ok(())
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if !(value >= 0.0) {
        return Err(invalid(name, format!("{value} must be >= 0")));
    }
    Ok(())
}
