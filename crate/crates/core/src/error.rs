use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error("factorization failed; last jitter tried was {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("feature file {path}: record {record}: {reason}")]
    Load {
        path: PathBuf,
        /// 1-based record number.
        record: usize,
        reason: String,
    },

    /// Transport or protocol failure talking to the feature extractor.
    /// `cell` is `None` for the un-occluded baseline request.
    #[error("extractor failed at {}: {reason}", describe_cell(.cell))]
    Extractor {
        cell: Option<(usize, usize)>,
        reason: String,
    },

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

fn describe_cell(cell: &Option<(usize, usize)>) -> String {
    match cell {
        Some((r, c)) => format!("cell ({r}, {c})"),
        None => "baseline image".to_string(),
    }
}
