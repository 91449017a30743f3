//! Fraud detection on multi-relation attributed graphs.
//!
//! The pipeline scores every neighbor of a node with a small label-aware MLP,
//! keeps the most similar fraction of them, aggregates the survivors with a
//! self-loop weight that a reinforcement-learning controller tunes per layer
//! and relation, fuses the relation embeddings, and classifies the result
//! with a convolution + max-pool + bidirectional recurrent head.
//!
//! Everything runs on a small define-by-run reverse-mode autodiff tape in
//! [`autodiff`]. A plain GCN baseline lives next to the full model in
//! [`trainer`].

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod head;
pub mod metrics;
pub mod purifier;
pub mod reinforcer;
pub mod relation;
pub mod trainer;

pub use error::{Error, Result};
