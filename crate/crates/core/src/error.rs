use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("trailing bytes: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },

    #[error("dimension overflow: {rows} x {cols} does not fit in memory")]
    DimensionOverflow { rows: u64, cols: u64 },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("M \u{2265} 1 violated: {0} is empty")]
    Empty(&'static str),

    #[error("zero dimension in {0}")]
    ZeroDimension(&'static str),

    #[error("ids must be unique and ascending (row {row}, id {id})")]
    UnsortedIds { row: usize, id: u32 },

    #[error("duplicate id {0}")]
    DuplicateId(u32),

    #[error("label out of range: {label} at row {row} with {num_classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: u64,
        num_classes: usize,
    },

    #[error("cardinality mismatch: {left} {what} vs {right}")]
    CardinalityMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("id mismatch at row {row}: {left} vs {right}")]
    IdMismatch { row: usize, left: u32, right: u32 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row {row} of confidence matrix sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },

    #[error("class {0} has no anchors")]
    EmptyClass(usize),

    #[error("degenerate prototype for class {class} (norm {norm:e})")]
    DegeneratePrototype { class: usize, norm: f64 },

    #[error("zero-norm vector in cosine similarity")]
    ZeroNorm,

    #[error("mapping has a fixed point at class {0}")]
    FixedPoint(usize),

    #[error("target rate unreachable; raise tau_max (target {target}, max achievable {achievable})")]
    TargetUnreachable { target: f64, achievable: f64 },

    #[error("diverged; lower learning_rate (epoch {epoch})")]
    Diverged { epoch: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Stable short code, used by the CLI and handy for matching in scripts.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BadMagic { .. } => "bad-magic",
            Error::Truncated { .. } => "truncated",
            Error::TrailingBytes { .. } => "trailing-bytes",
            Error::DimensionOverflow { .. } => "dimension-overflow",
            Error::NonFinite { .. } => "non-finite",
            Error::Empty(_) => "empty",
            Error::ZeroDimension(_) => "zero-dimension",
            Error::UnsortedIds { .. } => "unsorted-ids",
            Error::DuplicateId(_) => "duplicate-id",
            Error::LabelOutOfRange { .. } => "label-out-of-range",
            Error::CardinalityMismatch { .. } => "cardinality-mismatch",
            Error::IdMismatch { .. } => "id-mismatch",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::NotStochastic { .. } => "not-stochastic",
            Error::EmptyClass(_) => "empty-class",
            Error::DegeneratePrototype { .. } => "degenerate-prototype",
            Error::ZeroNorm => "zero-norm",
            Error::FixedPoint(_) => "fixed-point",
            Error::TargetUnreachable { .. } => "target-unreachable",
            Error::Diverged { .. } => "diverged",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Config(_) => "config",
            Error::File { .. } | Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
