use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("tape state error: {0}")]
    State(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("support error: {0}")]
    Support(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Divergence { epoch: usize, batch: usize, msg: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line tool.
    ///
    /// 2 config/parameter, 3 training divergence, 4 data/shape, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Config(_)
            | Error::Contract(_)
            | Error::Vocabulary(_)
            | Error::Split(_) => 2,
            Error::Divergence { .. } | Error::NonFinite { .. } => 3,
            Error::Dimension(_)
            | Error::State(_)
            | Error::Parse { .. }
            | Error::Degenerate(_)
            | Error::Support(_)
            | Error::Data(_)
            | Error::UndefinedMetric(_) => 4,
            Error::Io { .. } => 5,
        }
    }
}
