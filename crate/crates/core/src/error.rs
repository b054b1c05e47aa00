use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {what} expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("internal consistency violated: {0}")]
    Internal(String),

    #[error("episode budget exhausted after {0} episodes")]
    Budget(u64),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension { what, expected, actual });
    }
    Ok(())
}
