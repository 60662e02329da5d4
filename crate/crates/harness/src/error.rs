use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("{failed} of {total} replicates failed; first error: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error(transparent)]
    Core(#[from] bpamp_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
