use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the embedding toolkit.
#[derive(Debug, Error)]
pub enum HopeError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("model variant mismatch: {0}")]
    VariantMismatch(&'static str),

    #[error("explicit enumeration needs {required} interaction terms, limit is {limit}")]
    EnumerationBudget { required: u128, limit: u128 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("objective undefined: {0}")]
    UndefinedObjective(String),

    #[error("class {class} lacks exemplars")]
    MissingExemplars { class: u32 },

    #[error("class {class} has {size} members, fewer than the {required} requested")]
    ClassTooSmall {
        class: u32,
        size: usize,
        required: usize,
    },

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch}, iteration {iteration} (parameter norm {param_norm:e})"
    )]
    NonFinite {
        epoch: usize,
        batch: usize,
        iteration: usize,
        param_norm: f64,
    },

    #[error("reference set has {refs} points, fewer than k = {k}")]
    TooFewReferences { refs: usize, k: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("bad IDX magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: needed {needed} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        needed: usize,
        found: usize,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("parse error in {path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unknown label value {0}")]
    UnknownLabel(i64),

    #[error("malformed document: {0}")]
    Document(String),

    #[error("plotting requires a 2-D embedding, got {0} dimensions")]
    PlotDimension(usize),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failure classes reported by the command-line tool as exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numeric => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }
}

impl HopeError {
    pub fn class(&self) -> ErrorClass {
        use HopeError::*;
        match self {
            Config(_) | VariantMismatch(_) | EnumerationBudget { .. } | PlotDimension(_) => {
                ErrorClass::Config
            }
            NonFinite { .. } | UndefinedObjective(_) => ErrorClass::Numeric,
            DimensionMismatch { .. }
            | InvalidDataset(_)
            | MissingExemplars { .. }
            | ClassTooSmall { .. }
            | TooFewReferences { .. }
            | BadMagic { .. }
            | Truncated { .. }
            | CountMismatch { .. }
            | Parse { .. }
            | UnknownLabel(_)
            | Document(_)
            | Io { .. } => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HopeError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HopeError>;
