//! Sentence correction with a warped language model.
//!
//! A dual-head encoder reads a noisy transcription, optionally concatenated
//! with further n-best hypotheses, and predicts a warping operation and a
//! token at every position. Applying those predictions yields the corrected
//! sentence. The crate also carries the supporting machinery: edit-distance
//! alignment and labeling, a synthetic noisy channel, and WER scoring.

pub mod alignment;
pub mod corpus;
pub mod correction;
pub mod dataset;
pub mod error;
pub mod io;
pub mod model;
pub mod noisesim;
pub mod seed;
pub mod vocab;
pub mod warping;

pub use error::{Error, Result};
pub use vocab::{TokenId, TokenSeq, Vocabulary};
pub use warping::WarpOp;
