use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("clip too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("inconsistent spectrogram geometry: {0}")]
    Geometry(String),
    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("unsupported wav encoding in {path}: {detail}")]
    UnsupportedWav { path: PathBuf, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("descriptor: {0}")]
    Descriptor(String),
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: usize },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
