//! Controllable cross-modal (music/video) embedding engine.
//!
//! Two modality branches map precomputed features to a self-supervised and a
//! supervised task embedding. A combination weight α blends the projected
//! task embeddings into the retrieval embedding, and α can be changed freely
//! at query time.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which is what training and
//! the test suite use.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod retrieval;
pub mod trainer;

pub use error::{Error, Result};
pub use losses::Direction;
pub use numcore::Scalar;

pub type Matrix64 = numcore::Matrix<f64>;
pub type Matrix32 = numcore::Matrix<f32>;
pub type Tape64 = numcore::Tape<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type EmbeddingSet64 = model::EmbeddingSet<f64>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
pub type EmbeddedCorpus64 = retrieval::EmbeddedCorpus<f64>;
