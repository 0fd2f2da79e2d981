use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("png error on {path}: {message}")]
    Png { path: PathBuf, message: String },
    #[error("no fonts found under {0}")]
    NoFonts(PathBuf),
    #[error("font {font} is missing class {class}")]
    MissingClass { font: usize, class: usize },
    #[error("mixed image sizes: {}", offenders.join(", "))]
    MixedSizes { offenders: Vec<String> },
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("class {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("shape mismatch in {layer}: expected {expected}, got {got:?}")]
    Shape {
        layer: String,
        expected: String,
        got: Vec<usize>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("autodiff error: {0}")]
    Graph(String),
    #[error("unknown loss mode {0:?}; valid modes are wgan-gp, wgan-clip, dcgan")]
    UnknownLossMode(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("degenerate: identical to training")]
    DegenerateConsistency,
    #[error("degenerate distribution: {0}")]
    Degenerate(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(layer: impl Into<String>, expected: impl Into<String>, got: &[usize]) -> Self {
        Error::Shape {
            layer: layer.into(),
            expected: expected.into(),
            got: got.to_vec(),
        }
    }
}
