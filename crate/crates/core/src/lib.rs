//! Synonym set mining from open knowledge graph triple dumps.
//!
//! The pipeline reads a triple dump, keeps the predicates that look like
//! categorical properties, scores pairwise similarity of their values from
//! word-piece statistics and embeddings, clusters each property's values
//! with Louvain, and expands the resulting synsets by swapping core
//! word-pieces between members.

pub mod clustering;
pub mod config;
pub mod embed;
pub mod error;
pub mod expansion;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod selection;
pub mod similarity;
pub mod synset;
pub mod wordpiece;

pub use error::{Error, Result};
