//! Workbench for domain adaptation of extractive question answering.
//!
//! The crate covers the full loop: corpus ingestion and synthetic domains,
//! SQuAD-style scoring, domain-divergence statistics, answer-length
//! importance weights, a small span-extraction transformer with analytic
//! gradients, weighted SGD training and fine-tuning, and the experiment
//! harness that ties them together.

pub mod corpus;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod text;
pub mod trainer;
pub mod weighting;

pub use corpus::{Corpus, QaPair, SynthDomainSpec};
pub use error::{Error, Result};
