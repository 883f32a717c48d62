use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected \"SYNCEMB1\"")]
    BadMagic { path: PathBuf, found: String },

    #[error("{path}: unsupported format version {found:?}, this build reads \"SYNCEMB1\"")]
    VersionMismatch { path: PathBuf, found: String },

    #[error("{path}: unknown flag bits {flags:#x} (only bit 0 is defined)")]
    UnknownFlags { path: PathBuf, flags: u32 },

    #[error("{path}: truncated file, header declares n={rows} d={dim} ({needed} payload bytes) but only {present} are present")]
    Truncated {
        path: PathBuf,
        rows: u64,
        dim: u32,
        needed: u64,
        present: u64,
    },

    #[error("{path}: {extra} unexpected trailing bytes after payload")]
    TrailingBytes { path: PathBuf, extra: u64 },

    #[error("{context}: non-finite value at row {row}, column {col}")]
    NonFinite {
        context: String,
        row: usize,
        col: usize,
    },

    #[error("{context}: row {row} has L2 norm {norm}, outside 1e-4 of 1.0 although flagged normalized")]
    NotNormalized {
        context: String,
        row: usize,
        norm: f64,
    },

    #[error("{context}: invalid shape: {reason}")]
    Shape { context: String, reason: String },

    #[error("{context}: duplicate id {id:?} at row {row}")]
    DuplicateId {
        context: String,
        id: String,
        row: usize,
    },

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("length mismatch: {left_name} has {left} rows but {right_name} has {right}")]
    LengthMismatch {
        left_name: String,
        left: usize,
        right_name: String,
        right: usize,
    },

    #[error("dimension mismatch: {left_name} has d={left} but {right_name} has d={right}")]
    DimensionMismatch {
        left_name: String,
        left: usize,
        right_name: String,
        right: usize,
    },

    #[error("id misalignment in {matrix} at row {row}: corpus has {expected:?}, matrix has {found:?}")]
    IdMisalignment {
        matrix: String,
        row: usize,
        expected: String,
        found: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("empty retrieval pool")]
    EmptyPool,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("strategy {strategy} requires one image per caption, but bundle has {captions} captions and {images} images")]
    Unpaired {
        strategy: String,
        captions: usize,
        images: usize,
    },

    #[error("oracle size guard: {what} has {n} rows, limit is {limit}")]
    OracleGuard {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("manifest does not match bundle: {0}")]
    ManifestMismatch(String),

    #[error("thread pool: {0}")]
    ThreadPool(String),

    #[error("csv: {0}")]
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
