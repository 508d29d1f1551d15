use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("infeasible constraint: {message} (minimum achievable error {min_error:.6})")]
    Infeasible { message: String, min_error: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn eval(msg: impl Into<String>) -> Self {
        Error::Evaluation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Coarse classification used by front ends to pick an exit status.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Precondition(_) => ErrorKind::Config,
            Error::Ingestion { .. } | Error::Data(_) | Error::Io(_) | Error::Dimension { .. } => {
                ErrorKind::Data
            }
            Error::Evaluation(_) | Error::Numerical(_) | Error::Infeasible { .. } => {
                ErrorKind::Numerical
            }
            Error::Round { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}
