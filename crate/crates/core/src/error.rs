use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty input sequence")]
    EmptyInput,

    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },

    #[error("input contains special token id {0}")]
    SpecialToken(u32),

    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),

    #[error("invalid warp policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid noise profile: {0}")]
    InvalidProfile(String),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("empty golden transcription at index {0}")]
    EmptyGolden(usize),

    #[error("hypothesis set {0} has no golden transcription")]
    MissingGolden(String),

    #[error("empty hypothesis set at index {0}")]
    EmptyHypothesisSet(usize),

    #[error("record {0} has no hypotheses")]
    NoHypotheses(String),

    #[error("sequence too long: {len} > {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no supervised positions")]
    NoSupervisedPositions,

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("non-finite parameter in {0}")]
    NonFiniteParameter(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
