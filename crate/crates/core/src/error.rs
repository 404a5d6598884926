use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("resonant frequency {value:.6e} Hz of element {element} in state {state} outside tuning range [{min:.6e}, {max:.6e}]")]
    TuningLimit {
        state: usize,
        element: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("combiner column {column} is identically zero")]
    ZeroColumn { column: usize },

    #[error("element {element} does not belong to microstrip {microstrip}")]
    NotOnMicrostrip { element: usize, microstrip: usize },

    #[error("{what} is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("unlocalizable configuration: {0}")]
    Unlocalizable(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn singular(what: impl Into<String>, condition: f64) -> Self {
        Error::Singular {
            what: what.into(),
            condition,
        }
    }
}
