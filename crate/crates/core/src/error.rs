use thiserror::Error;

/// Errors raised by the solver, optimizer and data layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An inconsistent problem or grid definition.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("region `{0}` not found in data")]
    RegionNotFound(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("range error: {0}")]
    Range(String),

    /// The successive-approximation loop blew up.
    #[error("iteration diverged at iteration {iteration}: loss {loss:.6e} exceeds {limit:.6e}")]
    Diverged { iteration: usize, loss: f64, limit: f64 },

    /// A scheduled target cannot be met with parameters inside the admissible box.
    #[error("target unreachable within parameter bounds: {0}")]
    Unreachable(String),

    /// Failure inside a given window of a windowed fit.
    #[error("window {index} [{start}, {end}]: {source}")]
    Window {
        index: usize,
        start: f64,
        end: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} is not finite ({value})")))
    }
}
