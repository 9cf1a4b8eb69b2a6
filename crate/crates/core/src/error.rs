use std::path::PathBuf;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("distribution has no mass")]
    EmptyDistribution,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("delta for `{attribute}` is {value}, expected a value in [0, 1]")]
    InvalidDelta { attribute: String, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate id `{id}` on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("text contains no tokens")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("vector for `{id}` has norm {norm}, too far from 1")]
    BadNorm { id: String, norm: f64 },
    #[error("candidate `{0}` has no embedding")]
    MissingEmbedding(String),

    #[error("selection rate undefined: group `{0}` absent from pool")]
    UndefinedRate(String),
    #[error("impact ratio undefined: every selection rate is zero")]
    UndefinedIr,
    #[error("true positive rate undefined: group `{0}` has no relevant candidates")]
    UndefinedTpr(String),
    #[error("group `{0}` missing")]
    MissingGroup(String),
    #[error("empty input")]
    EmptyInput,
    #[error("sign test undefined: every pair is tied")]
    UndefinedTest,

    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("offline dataset is empty")]
    EmptyDataset,

    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
