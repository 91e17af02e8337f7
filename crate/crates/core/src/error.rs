use thiserror::Error;

/// Errors raised by the toolkit. Validation variants map to CLI exit code 1,
/// numerical variants to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("representation error: expected {expected} field")]
    Representation { expected: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("inadmissible parameters, failed: {}", failed.join("; "))]
    Admissibility { failed: Vec<String> },

    #[error("coverage error: {what} (uncovered mass estimate {uncovered:.3e})")]
    Coverage { what: String, uncovered: f64 },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("non-contraction after {iterations} iterations (last ratio {last_ratio:.3})")]
    NonContraction {
        iterations: usize,
        last_ratio: f64,
        report: Box<crate::picard::ContractionReport>,
    },

    #[error("field file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonContraction { .. } | Error::Coverage { .. } | Error::Resolution(_) | Error::Fit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
