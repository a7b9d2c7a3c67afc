use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected triplet: {0}")]
    RejectedTriplet(String),

    #[error("unknown entity id {0}")]
    UnknownEntity(u32),

    #[error("graph is frozen; mutation is not allowed")]
    GraphFrozen,

    #[error("malformed graph file at line {line} (byte offset {offset}): {message}")]
    MalformedGraphFile {
        line: usize,
        offset: usize,
        message: String,
    },

    #[error("generator unavailable after {attempts} attempt(s): {message}")]
    GeneratorUnavailable { attempts: u32, message: String },

    #[error("malformed generator response: {0}")]
    MalformedResponse(String),

    #[error("invalid generator request: {0}")]
    InvalidRequest(String),

    #[error("no entities could be extracted from the query")]
    EmptyExtraction,

    #[error("no paths found between grounded entities")]
    NoPathsFound,

    #[error("neither graph paths nor fallback chunks matched the query")]
    NoContext,

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("element does not belong to the path: {0}")]
    UnknownElement(String),

    #[error("degenerate sub-path: endpoint degrees sum to zero")]
    DegenerateSubpath,

    #[error("graph too large for brute-force oracle: {nodes} nodes (cap {cap})")]
    GraphTooLarge { nodes: usize, cap: usize },

    #[error("invalid template: {0}")]
    Template(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed record in {path} at line {line}: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
