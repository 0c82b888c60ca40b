//! Open-set face recognition by fine-tuning per-class prompt embeddings
//! against a frozen image encoder.
//!
//! The pipeline is split into the following stages:
//!
//! - [`preprocess`]: folder-per-identity ingestion, five-point landmark
//!   alignment and the deterministic stratified train/test split.
//! - [`encoder`]: frozen image embeddings behind the [`EncoderBackend`]
//!   trait (ONNX models or a deterministic mock), the embedding cache file
//!   and cosine-similarity diagnostics.
//! - [`finetune`]: softmax cross-entropy over scaled-cosine logits, its
//!   analytic gradient, AdamW and the cosine-annealed learning rate.
//! - [`recognize`]: the open-set decision rule (softmax confidence
//!   threshold, 0.80 by default).
//! - [`evaluate`]: deployment sessions, confusion counting, accuracy / FPR /
//!   FNR and report rendering.
//! - [`synthetic`]: a small end-to-end experiment on the mock encoder.

pub mod config;
pub mod encoder;
pub mod error;
pub mod evaluate;
pub mod finetune;
pub mod preprocess;
pub mod recognize;
pub(crate) mod rng;
pub mod synthetic;
pub mod types;

pub use encoder::{EmbeddingCache, EncoderBackend};
pub use error::{Error, Result};
pub use evaluate::{ConfusionCounts, EvaluationReport, Session};
pub use recognize::{Outcome, RecognitionDecision};
pub use types::{
    cosine_similarity, l2_normalize, Embedding, Gallery, HyperParams, IdentityLabel, Logits,
    TargetBatch,
};
