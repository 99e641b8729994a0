use std::path::PathBuf;
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::data::DataError;
use crate::embeddings::EmbeddingError;
use crate::graph::GraphError;
use crate::harness::HarnessError;
use crate::lexicon::LexiconError;
use crate::model::ModelError;

/// Top-level error with a process exit code: 1 usage, 2 data, 3 numeric.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("lexicon: {0}")]
    Lexicon(#[from] LexiconError),
    #[error("embeddings: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

fn model_code(e: &ModelError) -> i32 {
    match e {
        ModelError::Config(_) => 1,
        ModelError::Autodiff(a) => autodiff_code(a),
        _ => 2,
    }
}

fn autodiff_code(e: &AutodiffError) -> i32 {
    match e {
        AutodiffError::NonFinite { .. } => 3,
        AutodiffError::Checkpoint(_) => 2,
        _ => 3,
    }
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { .. } | Error::Parse { .. } => 2,
            Error::Lexicon(_) | Error::Embedding(_) | Error::Data(_) | Error::Graph(_) => 2,
            Error::Model(m) => model_code(m),
            Error::Autodiff(a) => autodiff_code(a),
            Error::GradCheck(_) => 3,
            Error::Harness(h) => match h {
                HarnessError::Diverged { .. } => 3,
                HarnessError::UnknownVariant(_) | HarnessError::Config(_) => 1,
                HarnessError::Model(m) => model_code(m),
                _ => 2,
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
