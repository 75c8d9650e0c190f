use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config error{}: key `{key}`: {message}", at_line(*line))]
    Config {
        key: String,
        line: usize,
        message: String,
    },
    #[error("format error in {}: {message} (byte offset {offset})", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: [usize; 2], rhs: [usize; 2]) -> Self {
        Error::Shape { op, lhs, rhs }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Line 0 marks a value that did not come from a file.
fn at_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" at line {line}")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
