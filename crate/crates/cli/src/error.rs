use std::process::ExitCode;

/// A failed command, classified by who has to fix it.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or flag values.
    #[error("{0}")]
    Usage(String),
    /// Missing, malformed or inconsistent input files and artifacts.
    #[error("{0}")]
    Data(autorefine::Error),
    #[error("{0}")]
    Internal(String),
    /// The reader of stdout went away; not reported as a failure.
    #[error("output closed")]
    OutputClosed,
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
            CliError::OutputClosed => 0,
        })
    }
}

impl From<autorefine::Error> for CliError {
    fn from(e: autorefine::Error) -> Self {
        use autorefine::Error as E;
        match e {
            E::InvalidParameter(m) => CliError::Usage(m),
            E::Parse { .. }
            | E::DuplicateId { .. }
            | E::MissingField(_)
            | E::EmptyText
            | E::DimMismatch { .. }
            | E::BadNorm { .. }
            | E::MissingEmbedding(_)
            | E::SchemaMismatch(_)
            | E::InvalidSchema(_)
            | E::InvalidDistribution(_)
            | E::EmptyCorpus
            | E::EmptyDataset
            | E::Snapshot(_)
            | E::Config(_)
            | E::Io { .. } => CliError::Data(e),
            other => CliError::Internal(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
