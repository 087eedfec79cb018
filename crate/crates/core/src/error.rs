//! Error type shared across the library.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value or argument violates an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical fit could not be carried out on the provided data.
    #[error("fit failed: {0}")]
    FitFailed(String),

    /// A mask or region selects no pixels.
    #[error("empty region: {0}")]
    EmptyRegion(String),

    /// A with-foundation sample has no matching bare-skin or swatch entry.
    #[error("unpaired sample: subject '{subject}', shade '{shade}' ({missing} missing)")]
    UnpairedSample {
        subject: String,
        shade: String,
        missing: &'static str,
    },

    /// Malformed file contents; `line` is 1-based where applicable.
    #[error("parse error in {path}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
