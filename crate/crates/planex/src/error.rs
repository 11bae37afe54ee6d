use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error in {entry}: {message}")]
    Parse { entry: String, message: String },
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("invalid camera in {entry}: {message}")]
    InvalidCamera { entry: String, message: String },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt block {block}: {message}")]
    CorruptBlock { block: String, message: String },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image {}: {message}", .path.display())]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] planex_core::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
