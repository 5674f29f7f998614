use std::path::PathBuf;

/// Errors of the IO and experiment layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] wernet_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Malformed file content. `offset` is the byte at which parsing failed.
    #[error("{format} format error at byte {offset}: {message}")]
    Format {
        format: &'static str,
        offset: usize,
        message: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    /// A file named on the command line or in a config does not exist.
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
