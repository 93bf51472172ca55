//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis too large: {count} states exceeds the limit of {limit}")]
    Oversize { count: u128, limit: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "resonance: cavity {cavity}, n = {n}, m = {m}, denominator {denominator:.4e} below threshold {threshold:.4e}"
    )]
    Resonance {
        cavity: usize,
        n: usize,
        m: i64,
        denominator: f64,
        threshold: f64,
    },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("empty sector: tr(P_N rho) = {0:.3e}")]
    EmptySector(f64),

    #[error("unsupported frame: {0}")]
    UnsupportedFrame(String),

    #[error("regime check failed: {0}")]
    Regime(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Oversize { .. } => 2,
            Error::UnsupportedFrame(_) => 2,
            Error::Regime(_) | Error::Resonance { .. } => 3,
            Error::Integration { .. } | Error::EmptySector(_) | Error::Numerical(_) => 4,
            Error::Io(_) => 4,
        }
    }
}
