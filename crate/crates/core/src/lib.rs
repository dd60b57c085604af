//! Cascade analytics over repost logs.
//!
//! The crate turns a repost event log into a directed influence graph,
//! partitions that graph into communities, reconstructs per-microblog
//! cascades and measures how the communities around each cascade are
//! distributed. Those measurements feed an imbalanced classification
//! protocol (SMOTE + random forest, stratified cross-validation, threshold
//! sweeps and stability-selection feature weights).
//!
//! Data-parallel loops (cascade extraction, fold training, tree fitting)
//! run on rayon when the `parallel` feature is enabled and fall back to
//! plain iterators otherwise. Results never depend on the thread count.

pub mod cascade;
pub mod community;
pub mod error;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod learn;
pub mod manifest;
pub mod par;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
