use thiserror::Error;

#[derive(Debug, Error)]
pub enum MorphoError {
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] diff2dist::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MorphoError> = std::result::Result<T, E>;
