use std::io;
use std::path::{Path, PathBuf};

use cxrkit_core::classification::MetricError;
use cxrkit_core::corpus::CorpusError;
use cxrkit_core::evaluation::EvalError;
use cxrkit_core::radgraph::GraphError;
use cxrkit_core::stats::StatsError;
use cxrkit_study::labeler_client::RemoteLabelError;
use cxrkit_study::StudyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("report ids differ between {left} and {right}: {detail}")]
    IdMismatch {
        left: String,
        right: String,
        detail: String,
    },
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("{path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Lexicon(#[from] cxrkit_core::labeler::LexiconError),
    #[error("remote labeler failed on {failed} of {total} reports; first: {first}")]
    RemoteLabel {
        failed: usize,
        total: usize,
        first: RemoteLabelError,
    },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for rejected input, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::RemoteLabel { .. } => 1,
            CliError::Study(StudyError::Io(_) | StudyError::Log(_)) => 1,
            _ => 2,
        }
    }
}
