use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    /// A scalar fell outside its admissible range.
    #[error("{name} = {value} is outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    /// A structural parameter is invalid (grid size, vector length, ...).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A non-finite number showed up where state must stay finite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Malformed replay row.
    #[error("replay parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The replay stream holds no rows at all.
    #[error("empty stream")]
    EmptyStream,

    /// The environment ran dry before the configured horizon.
    #[error("stream ended after {available} rows, horizon needs {required}")]
    StreamEnded { available: usize, required: usize },

    /// An operation needs at least one record.
    #[error("empty log")]
    EmptyLog,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for OcpError {
    fn from(err: std::io::Error) -> Self {
        OcpError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OcpError>;

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(OcpError::Domain {
            name,
            value,
            range: "[0, 1]",
        })
    }
}
