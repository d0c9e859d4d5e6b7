//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BiLinkError>;

#[derive(Debug, Error)]
pub enum BiLinkError {
    /// Malformed input file (bad JSON line, wrong column count, ...).
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A triple, split, or label refers to an id that does not exist.
    #[error("referential integrity: {0}")]
    Referential(String),

    /// A split respecting the requested constraints cannot be built.
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    /// Bad configuration value or unknown configuration key.
    #[error("config error: {0}")]
    Config(String),

    /// Non-finite or otherwise unusable numeric input.
    #[error("numeric input error: {0}")]
    Numeric(String),

    /// Token sequence violates the layout an operation expects.
    #[error("input layout error: {0}")]
    InputLayout(String),

    /// Batch constraints violated (too small, empty, ...).
    #[error("batch error: {0}")]
    Batch(String),

    /// Training aborted; diagnostics were dumped to the given path.
    #[error("training aborted: {msg} (diagnostics at {dump_path})")]
    TrainingAborted { msg: String, dump_path: String },

    /// Evaluation cannot proceed (empty index, missing gold score, ...).
    #[error("evaluation error: {0}")]
    Eval(String),

    /// Checkpoint or artifact incompatible with the current configuration.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
