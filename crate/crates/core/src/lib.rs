//! Single-stage radar-camera metric depth estimation.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`autodiff`], [`flops`]: dense tensors, a reverse-mode tape
//!   and multiply-add accounting.
//! * [`graph`]: kNN graph, node/edge features and message passing over the
//!   radar point cloud.
//! * [`fusion`]: radar-centered windowed cross-modal attention, its streaming
//!   (online softmax) evaluation and the dense masked reference.
//! * [`model`]: encoder, decoder, auxiliary relative-depth branch and the full
//!   forward pass; parameter checkpoints.
//! * [`train`]: masked dual-term L1 loss, Adam and the epoch schedule.
//! * [`scene`]: synthetic scenes, radar simulation, metrics and file formats.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod autodiff;
pub mod error;
pub mod flops;
pub mod fusion;
pub mod graph;
pub mod kernels;
pub mod model;
pub mod params;
pub mod scalar;
pub mod scene;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape64 = autodiff::Tape<f64>;
