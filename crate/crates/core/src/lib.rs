//! Persona-grounded dialogue response selection, end to end and at desk
//! scale: corpus ingestion, rule-based annotation, concept mining, trainable
//! dual encoders with a cross-attention interaction layer, a BiGRU
//! concept-flow encoder, a negative-sampling trainer, and a hits@1/MRR
//! evaluation harness.
//!
//! The pipeline is file-oriented: each stage reads the artifacts of the
//! previous one and writes its own, so every stage is independently testable
//! and resumable. The `converank` binary wires the stages together.

pub mod annotate;
pub mod concepts;
pub mod config;
pub mod conceptflow;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod neural;
pub mod training;

#[doc(hidden)]
pub mod fixtures;

pub use error::{PipelineError, Result};
