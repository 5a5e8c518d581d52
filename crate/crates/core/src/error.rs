use std::path::PathBuf;

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    /// The weight-demodulation radicand `ε + Σ s_j W_ij..` was not positive.
    #[error("weight demodulation: non-positive radicand {radicand} for output channel {channel}")]
    Domain { channel: usize, radicand: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// A loss or gradient became NaN/Inf.
    #[error("numeric: {0}")]
    Numeric(String),

    #[error("partition: {0}")]
    Partition(String),

    #[error("analysis: {0}")]
    Analysis(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
