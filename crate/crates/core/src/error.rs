use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the library. Each variant belongs to one of three
/// families (validation, data, internal) which the CLI maps to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing input file {path}")]
    MissingFile { path: PathBuf },

    #[error("missing {what} at {path}; run `glassbox {producer}` first")]
    MissingArtifact {
        what: String,
        path: PathBuf,
        producer: String,
    },

    #[error("{file}:{line}: malformed row: {message}")]
    MalformedRow {
        file: String,
        line: u64,
        message: String,
    },

    #[error("unexpected header in {file}: expected [{expected}], found [{found}]")]
    BadHeader {
        file: String,
        expected: String,
        found: String,
    },

    #[error("schema mismatch on feature `{feature}`: {detail}")]
    SchemaMismatch { feature: String, detail: String },

    #[error("schema hash mismatch: model {model} vs frame {frame}")]
    SchemaHash { model: String, frame: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("enumeration over {players} players refused (limit {limit}); use tree_shap for tree models")]
    TooManyPlayers { players: usize, limit: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Data,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::SchemaMismatch { .. }
            | Error::SchemaHash { .. }
            | Error::TooManyPlayers { .. } => ErrorClass::Validation,
            Error::MissingFile { .. }
            | Error::MissingArtifact { .. }
            | Error::MalformedRow { .. }
            | Error::BadHeader { .. }
            | Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::Invariant(_) => ErrorClass::Internal,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Data => 3,
            ErrorClass::Internal => 4,
        }
    }
}
