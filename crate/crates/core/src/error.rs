use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },
    #[error("mode {0} appears more than once")]
    RepeatedMode(usize),
    #[error("contracting the only mode of an order-1 tensor yields a scalar; use multi_contract")]
    ScalarResult,
    #[error("operation requires a cubic tensor, got dims {0:?}")]
    NonCubic(Vec<usize>),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("tensor has zero Frobenius norm")]
    ZeroTensor,
    #[error("outside the validity region: {0}")]
    OutOfRegime(String),
    #[error("index {index:?} appears more than once")]
    DuplicateIndex { index: Vec<usize> },
    #[error("index {index:?} out of range for dims {dims:?}")]
    IndexOutOfRange { index: Vec<usize>, dims: Vec<usize> },
    #[error("entries are not strictly sorted at {index:?}")]
    Unsorted { index: Vec<usize> },
    #[error("stored zero value at {index:?}")]
    StoredZero { index: Vec<usize> },
    #[error("enumeration needs {required} evaluations, budget is {budget}")]
    EnumerationBudget { required: u128, budget: u128 },
    #[error("net covering radius {eps} is not below 1; raise the resolution above m={m}")]
    CoarseNet { eps: f64, m: usize },
    #[error("{trials} trials is too few, need at least {min}")]
    TooFewTrials { trials: usize, min: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse failures for the on-disk tensor formats.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"DTNS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("payload holds {found} bytes but dims {dims:?} need {expected}")]
    PayloadMismatch {
        dims: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("line {line}: wrong number of fields: expected {expected}, got {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-numeric field `{field}`")]
    NonNumeric { line: usize, field: String },
    #[error("line {line}: index {index} out of range for dim {dim}")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        dim: usize,
    },
    #[error("line {line}: indices not in strictly increasing order")]
    Unsorted { line: usize },
    #[error("line {line}: duplicate index")]
    Duplicate { line: usize },
    #[error("line {line}: stored zero or non-finite value")]
    BadValue { line: usize },
    #[error("header declares {declared} entries, file has {found}")]
    EntryCount { declared: usize, found: usize },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
