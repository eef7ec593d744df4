use std::io;

use thiserror::Error;

use crate::optimizers::RunLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range for {n} components")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid labels: {0}")]
    Labels(String),

    /// The objective at a snapshot became non-finite or exploded. The partial
    /// log holds every epoch completed before the failing one.
    #[error("diverged at epoch {epoch}")]
    Diverged { epoch: usize, partial: Box<RunLog> },

    #[error("did not converge in {iters} iterations (residual {residual:e}); increase max_iters")]
    NotConverged { iters: usize, residual: f64 },

    #[error("reference cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
