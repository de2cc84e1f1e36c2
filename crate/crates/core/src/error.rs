use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("dimension mismatch{}: expected {expected}, found {found}", context_suffix(.context))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("unknown split tag {tag:?} at line {line}")]
    UnknownSplit { line: usize, tag: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("only one class present in {0}")]
    SingleClass(String),

    #[error("degenerate direction for {scope:?}: |raw| = {norm:e}")]
    DegenerateDirection { scope: String, norm: f64 },

    #[error("split access violation: {purpose} may not read {split} records ({count} offending)")]
    SplitViolation {
        purpose: String,
        split: String,
        count: usize,
    },

    #[error("calibration ids overlap other splits: {0:?}")]
    SplitOverlap(Vec<String>),

    #[error("missing {split} split at layer {layer}")]
    MissingSplit { layer: u32, split: String },

    #[error("unknown domain {0:?}")]
    UnknownDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gram matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("unsupported bundle version {0:?}")]
    Version(String),

    #[error("corrupted payload: {0}")]
    CorruptedPayload(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("oracle_router mode requires a ground-truth domain")]
    MissingOracleDomain,

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn context_suffix(ctx: &str) -> String {
    if ctx.is_empty() {
        String::new()
    } else {
        format!(" ({ctx})")
    }
}

impl Error {
    pub fn dim(expected: usize, found: usize, context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected,
            found,
            context: context.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for validation errors (bad parameters, violated
    /// contracts), 3 for data errors (unreadable or inconsistent inputs).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::SplitViolation { .. }
            | Error::SplitOverlap(_)
            | Error::Invariant(_)
            | Error::MissingOracleDomain
            | Error::NotPsd(_)
            | Error::UnknownDomain(_)
            | Error::Version(_) => 2,
            _ => 3,
        }
    }
}

/// Shorthand for a failed dimension check.
pub(crate) fn check_dim(expected: usize, found: usize, context: &str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dim(expected, found, context))
    }
}
