use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] artextend_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: cannot decode image: {source}", path.display())]
    Decode { path: PathBuf, source: image::ImageError },

    #[error("{}: cannot encode image: {source}", path.display())]
    Encode { path: PathBuf, source: image::ImageError },

    #[error("empty corpus: no usable images under {}", .0.display())]
    EmptyCorpus(PathBuf),

    #[error("{}: not a directory", .0.display())]
    MissingDirectory(PathBuf),

    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    MissingResource(String),

    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },

    #[error("{}: another process holds the lock; wait for it to finish", .0.display())]
    Locked(PathBuf),

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
}

impl Error {
    /// Process exit status: 2 for usage and config problems, 3 for a missing
    /// external resource, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Usage(_)
            | Error::MissingDirectory(_)
            | Error::Decode { .. }
            | Error::EmptyCorpus(_) => 2,
            Error::Core(artextend_core::Error::Config(_)) => 2,
            Error::MissingResource(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn checkpoint(path: impl AsRef<Path>, message: impl Into<String>) -> Error {
        Error::Checkpoint { path: path.as_ref().to_path_buf(), message: message.into() }
    }
}
