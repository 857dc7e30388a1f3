//! Biomedical event extraction over contextual token encodings, optionally
//! embedded by a two-layer graph convolutional network on the full dependency
//! parse of each sentence.

pub mod assembler;
pub mod corpus;
pub mod depgraph;
pub mod encoder;
pub mod error;
pub mod graphembed;
pub mod heads;
pub mod linalg;
pub mod params;
pub mod pipeline;
pub mod scalar;
pub mod scorer;

pub use error::{BeeError, Result};
pub use scalar::Scalar;

pub type MatrixF32 = linalg::Matrix<f32>;
pub type MatrixF64 = linalg::Matrix<f64>;
pub type ModelF32 = pipeline::BeeModel<f32>;
pub type ModelF64 = pipeline::BeeModel<f64>;
pub type CheckpointF32 = pipeline::Checkpoint<f32>;
pub type CheckpointF64 = pipeline::Checkpoint<f64>;
pub type DepGraphF64 = depgraph::DepGraph<f64>;
