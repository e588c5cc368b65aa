//! Cross-modal conditional generation through constrained embedding space
//! mapping.

pub mod baseline;
pub mod cmem;
pub mod datasets;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod image_models;
pub mod imageio;
pub mod mapping;
pub mod nn;
pub mod pipeline;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
