//! Crowd abnormality detection from cross-channel conditional GANs.
//!
//! Two image-to-image generators are trained on normal footage only: one maps
//! a frame to its optical-flow image, the other maps a flow image back to a
//! frame. At test time their reconstruction errors are turned into a fused
//! per-pixel abnormality heatmap and scored with frame- and pixel-level ROC
//! protocols.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root pick the concrete type.

pub mod checkpoint;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod gan;
pub mod imageops;
pub mod nn;
pub mod optflow;
pub mod optim;
pub mod perception;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use gan::{Direction, NoiseSource};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Generator32 = gan::Generator<f32>;
pub type Generator64 = gan::Generator<f64>;
pub type Discriminator32 = gan::Discriminator<f32>;
pub type Discriminator64 = gan::Discriminator<f64>;
pub type FlowField32 = optflow::FlowField<f32>;
pub type FlowImage32 = optflow::FlowImage<f32>;
pub type Checkpoint32 = checkpoint::Checkpoint<f32>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
pub type Detector32<'a> = detector::Detector<'a, f32>;
