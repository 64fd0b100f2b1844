//! VLAD hashing and bag-of-words reconstruction for bandwidth-limited visual search.
//!
//! The mobile side aggregates local descriptors into a VLAD vector and hashes it
//! to a short binary code. The server reverses the code to an approximate VLAD,
//! recovers a sparse BoW histogram by non-negative LASSO over the vocabulary
//! sub-trees, optionally narrowed by contextual cues and refined toward a
//! pseudo-BoW prior, and ranks a database with it.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod hashing;
pub mod io;
pub mod kmeans;
pub mod pipeline;
pub mod reconstruct;
pub mod report;
pub mod retrieval;
pub mod sparse;
pub mod synth;
pub mod vocab;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use pipeline::run_pipeline;
pub use report::Report;
