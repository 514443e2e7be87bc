use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by primitive #{index} ({op})")]
    NonFinite { index: usize, op: &'static str },

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("empty target: sequence {sample} has no prediction positions")]
    EmptyTarget { sample: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("token {token} out of vocabulary (size {vocab}) in sample {sample}")]
    OutOfVocab { sample: usize, token: usize, vocab: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("non-finite gradient in noise draw {draw}")]
    NonFiniteGradient { draw: usize },

    #[error("proximal iteration diverged at step {step}: displacement norm {norm:e}")]
    Divergence { step: usize, norm: f64 },

    #[error("non-finite training loss at epoch {epoch}, step {step}")]
    TrainingDiverged { epoch: usize, step: usize },

    #[error("pruning would empty layer {layer}")]
    EmptyLayer { layer: String },

    #[error("structure slice out of bounds: {0}")]
    SliceOutOfBounds(String),

    #[error("value {value:e} at index {index} overflows {format}")]
    Overflow { index: usize, value: f64, format: &'static str },

    #[error("unknown test function '{0}'")]
    UnknownFunction(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("strict mode: {0}")]
    Strict(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::TrainingDiverged { .. } => 3,
            Error::EmptyLayer { .. } => 4,
            Error::Divergence { .. } | Error::NonFiniteGradient { .. } => 5,
            Error::Strict(_) => 6,
            _ => 2,
        }
    }
}
