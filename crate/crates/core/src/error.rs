use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("invalid assets: {0}")]
    InvalidAssets(String),
    #[error("invalid body state: {0}")]
    InvalidState(String),
    #[error("invalid camera `{id}`: {msg}")]
    InvalidCamera { id: String, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in loss term `{term}`")]
    NonFiniteLoss { term: String },
    #[error("non-finite gradient in parameter group `{group}`")]
    NonFiniteGradient { group: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing observations: {0}")]
    Missing(String),
    #[error("{file}: field `{field}`: {msg}")]
    Schema {
        file: String,
        field: String,
        msg: String,
    },
    #[error("optimization diverged in stage {stage} at step {step}")]
    Diverged {
        stage: u8,
        step: usize,
        checkpoint: Box<crate::pipeline::MotionSolution>,
    },
    #[error("image `{path}`: {msg}")]
    Image { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn schema(file: impl Into<String>, field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            file: file.into(),
            field: field.into(),
            msg: msg.into(),
        }
    }
}
