use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A target value is not bracketed by the search interval.
    #[error("range error: {0}")]
    Range(String),

    /// Inconsistent configuration (step sizes, periods, sample counts).
    #[error("config error: {0}")]
    Config(String),

    /// The integrator produced a non-finite state.
    #[error("simulation diverged at t = {t}: state {state:?}")]
    Simulation { t: f64, state: [f64; 5] },

    /// The requested horizon is too short to reach the target set.
    #[error("horizon {t_end} too short, steering needs at least t0 = {required}")]
    Horizon { t_end: f64, required: f64 },

    /// Not enough samples or regeneration cycles for an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
