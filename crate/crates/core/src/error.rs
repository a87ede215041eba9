use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-monotonic timestamps at row {row}: {prev} then {next}")]
    NonMonotonic { row: usize, prev: i64, next: i64 },

    #[error("duplicate channel name `{0}`")]
    DuplicateChannel(String),

    #[error("NoC intervals overlap: [{a_start}, {a_end}] and [{b_start}, {b_end}]")]
    Overlap {
        a_start: i64,
        a_end: i64,
        b_start: i64,
        b_end: i64,
    },

    #[error("invalid interval: end {end} <= start {start}")]
    InvalidInterval { start: i64, end: i64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("missing channel `{0}`")]
    MissingChannel(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("series too short: need more than {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("non-finite input value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("{0}")]
    Empty(&'static str),

    #[error("schema mismatch: expected {expected}, found {found}")]
    Schema { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Name of the pipeline stage that failed, if this error came out of
    /// [`crate::pipeline`].
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
