use crate::geometry::Pose;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("rotation angle too close to pi for a unique logarithm")]
    DegenerateAngle,

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error("invalid pixel ({u}, {v})")]
    InvalidPixel { u: usize, v: usize },

    #[error("registration failed: {reason}")]
    RegistrationFailure { reason: String, last_pose: Pose },

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("no trajectory associations within the time window")]
    NoAssociation,

    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("run failed: {0}")]
    RunFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
