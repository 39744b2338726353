use thiserror::Error;

/// Errors produced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("item {0} has a zero-norm feature row")]
    DegenerateItem(usize),

    #[error("conditioning set is degenerate: {0}; drop collinear history items")]
    HistoryDegenerate(String),

    #[error("likelihood has rank {rank}, smaller than batch size {batch}")]
    RankDeficient { rank: usize, batch: usize },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("no score for user {user}, item {item}")]
    MissingScore { user: usize, item: usize },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("regret bound undefined: {0}")]
    BoundUndefined(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: msg.into(),
        }
    }
}
