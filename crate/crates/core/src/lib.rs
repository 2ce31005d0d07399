//! Copy-detection descriptor toolkit.
//!
//! - [`embedding`]: unit-norm descriptors, embedding sets and their binary format
//! - [`knn`]: exact top-k inner-product search
//! - [`negsub`]: negative embedding subtraction post-process
//! - [`trainer`]: encoder, contrastive loss with a cross-batch memory bank,
//!   momentum SGD and the staged schedule
//! - [`datagen`]: seeded synthetic copy-detection worlds
//! - [`eval`]: µAP and recall at fixed precision
//! - [`pipeline`]: end-to-end staged runs and the negative-pool swap
//! - [`commands`]: file-level operations behind the `copydet` binary

pub mod commands;
pub mod datagen;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod knn;
pub mod negsub;
pub mod pipeline;
pub mod rng;
pub mod trainer;

pub use embedding::{normalize, read_embeddings, write_embeddings, Descriptor, EmbeddingSet};
pub use error::{Error, Result};
