//! From-scratch engine for 1-d deep residual convolutional networks on
//! 2-channel eddy-current scan segments: tensor kernels with reverse-mode
//! differentiation, the ResNet1D / ResNeXt1D architecture family, dataset
//! handling, Adam training with a learning-rate range finder, and 10-crop
//! evaluation with class activation maps.

pub mod arch;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ops;
pub mod parallel;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Scalar, Tensor};
