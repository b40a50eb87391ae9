//! Cross-corpus generalization toolkit for binary text classifiers.
//!
//! The crate measures how well classifiers trained on one labeled corpus
//! carry over to others. It covers the whole pipeline:
//!
//! - [`corpus`]: ingestion of line-delimited JSON datasets, label merging
//!   into a binary scheme, tokenization, and deterministic train/val/test
//!   splits.
//! - [`vocab`]: TFIDF term vectors per class-corpus, the pairwise cosine
//!   similarity matrix, and top-k term extraction.
//! - [`embedding`] and [`tsne`]: word-vector loading and an exact t-SNE
//!   projection to 2D.
//! - [`features`], [`linear`], [`scores`]: a trainable linear probabilistic
//!   classifier over hashed text features, plus ingestion of externally
//!   produced score files so any outside model can plug into the grid.
//! - [`evaluate`]: precision/recall/F1/AUC and the full
//!   (trained-on x tested-on) cross-dataset grid.
//! - [`ensemble`]: seven strategies for combining per-classifier
//!   probability outputs into one verdict.
//! - [`synth`]: a seeded synthetic-corpus generator for self-contained
//!   experiments.

pub mod config;
pub mod corpus;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod linear;
pub mod report;
pub mod rng;
pub mod scores;
pub mod synth;
pub mod tsne;
pub mod vocab;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
