use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{family} kernel is singular at t = {t}, |x| = {radius}")]
    SingularPoint {
        family: &'static str,
        t: f64,
        radius: f64,
    },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("exponent could not be determined (residual {residual:.3e} above {threshold:.3e})")]
    ExponentUndetermined {
        residual: f64,
        threshold: f64,
        /// (log argument, log value) pairs used in the regression.
        table: Vec<(f64, f64)>,
    },

    #[error("spectral density is not finite at mode {mode:?} (|xi| = {radius})")]
    MeasureUnsupportedOnGrid { mode: Vec<i64>, radius: f64 },

    #[error("Picard iteration did not converge in {iterations} steps (last gap {gap:.3e}, tolerance {tol:.3e})")]
    NotConverged { iterations: usize, gap: f64, tol: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("mixed provenance: {0}")]
    MixedProvenance(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
