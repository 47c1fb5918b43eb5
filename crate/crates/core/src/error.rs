use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("path does not exist: {}", .0.display())]
    MissingPath(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {}: {message}", path.display())]
    Decode { path: PathBuf, message: String },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: truncated file, expected {expected} bytes, found {actual}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("inconsistent frame dimensions in {}: expected {expected_w}x{expected_h}, found {found_w}x{found_h}", path.display())]
    FrameDims {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in training features (sample {sample}, component {component})")]
    NonFinite { sample: usize, component: usize },

    #[error("appearance features missing for frame {0}")]
    MissingAppearance(usize),

    #[error("every training cube is static; lower the static threshold or check the input")]
    AllStatic,

    #[error("retained cluster {cluster} has {size} members; at least 2 are needed to train a one-class SVM")]
    ClusterTooSmall { cluster: usize, size: usize },

    #[error("one-class SVM solver did not converge within {max_iter} pair updates (KKT gap {gap:.3e})")]
    NotConverged { max_iter: usize, gap: f64 },

    #[error("AUC is undefined when only one class is present")]
    SingleClass,

    #[error("ground truth inconsistent at frame {frame}: {message}")]
    GroundTruth { frame: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's inputs rather than by the
    /// pipeline itself. The CLI maps these to exit status 2.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NotConverged { .. })
    }
}
