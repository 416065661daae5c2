use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{func} is undefined here: {reason}")]
    Domain { func: &'static str, reason: String },

    #[error("only {found} parents survived thinning but {needed} collaborating clusters are required")]
    TooFewParents { found: usize, needed: usize },

    #[error("could not place a device outside every protective zone after {attempts} attempts (cluster {cluster})")]
    Placement { cluster: usize, attempts: usize },

    #[error("training diverged in round {round}: loss {loss:e} exceeds 1e6 times the initial loss {initial:e}")]
    Diverged { round: usize, loss: f64, initial: f64 },

    #[error("dataset too small: {samples} samples cannot fill {devices} device shards ({reason})")]
    DatasetTooSmall { samples: usize, devices: usize, reason: String },

    #[error("trial {trial} (seed {seed}) failed: {source}")]
    Trial { trial: usize, seed: u64, source: Box<Error> },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

pub(crate) fn domain(func: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain { func, reason: reason.into() }
}
