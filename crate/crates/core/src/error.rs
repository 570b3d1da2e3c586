use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("duplicate observation for user {user}, item {item}")]
    Duplicate { user: usize, item: usize },

    #[error("id out of range: {0}")]
    OutOfRange(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("user {0} has no unrated items left")]
    Exhausted(usize),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("every grid point failed; last error: {0}")]
    AllConfigsFailed(String),

    #[error("unknown {kind} '{name}'; valid names: {valid}")]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: String,
    },

    #[error("invalid parameter '{key}': {msg}")]
    Param { key: String, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("true rating snapshot unavailable for this environment")]
    NoSnapshot,

    #[error("trial {trial} aborted: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(key: &str, msg: impl Into<String>) -> Self {
        Error::Param {
            key: key.to_string(),
            msg: msg.into(),
        }
    }
}
