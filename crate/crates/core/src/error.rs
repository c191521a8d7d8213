use thiserror::Error;

/// Errors surfaced by the simulator.
///
/// `Config` covers anything detectable before a run starts (bad parameter
/// combinations, malformed inputs); `Runtime` covers violations during a run
/// (consumed handles, adversary power violations).
#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        SimError::Runtime(msg.into())
    }
}
