//! Toolkit for accelerating and compressing small convolutional networks.
//!
//! Convolutional layers are binarized and executed with XNOR + popcount
//! kernels; fully connected layers are compressed with magnitude pruning
//! followed by k-means codebook quantization. The [`analyzer`] module does
//! the static parameter/FLOPs/size accounting for a network under a given
//! per-layer precision policy, and [`train`] provides a desk-scale training
//! and fine-tuning loop that drives the whole pipeline end to end.

pub mod analyzer;
pub mod binarize;
pub mod compress;
pub mod config;
pub mod error;
pub mod graphs;
pub mod tensor;
pub mod train;
pub mod verify;
pub mod xnor;

pub use error::{Result, TacError};
pub use tensor::{BitTensor, Tensor};
