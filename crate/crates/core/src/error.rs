use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The variants map onto the CLI exit-code families: parameter, shape,
/// range and usage problems are caller mistakes; data problems come from
/// inputs; numeric and precision problems come from the computation itself.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("{what} = {value} is outside the allowed range {range}")]
    Range { what: &'static str, value: String, range: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("precision not reached: {0}")]
    Precision(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status for this error: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param(_) | Error::Shape { .. } | Error::Range { .. } | Error::Usage(_) => 1,
            Error::Data(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 2,
            Error::Numeric(_) | Error::Precision(_) => 3,
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape { expected: expected.to_string(), got: got.to_string() }
    }

    pub(crate) fn range(what: &'static str, value: impl ToString, range: impl ToString) -> Self {
        Error::Range { what, value: value.to_string(), range: range.to_string() }
    }
}
