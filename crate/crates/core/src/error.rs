use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A generator backend failed. `stage` and `scene` identify where, so the
    /// pipeline can record a precise fallback.
    #[error("{stage} generation failed{}: {message}", scene.map(|s| format!(" for scene {s}")).unwrap_or_default())]
    Generation {
        stage: &'static str,
        scene: Option<usize>,
        message: String,
    },

    #[error("unknown mood {0:?}")]
    UnknownMood(String),

    #[error("{}", .0)]
    Validation(#[from] crate::pipeline::ValidationError),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("png: {0}")]
    Png(String),

    #[error("encoder exited with {status}: {diagnostics}")]
    Encode { status: String, diagnostics: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn generation(stage: &'static str, scene: Option<usize>, msg: impl ToString) -> Self {
        Error::Generation {
            stage,
            scene,
            message: msg.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a path to `std::io` errors.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
