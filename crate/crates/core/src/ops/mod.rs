//! Forward/backward kernels for every layer primitive the networks need.
//!
//! Kernels are pure functions over `(batch, length, channels)` tensors plus
//! parameter slices; gradient functions accumulate (`+=`) into caller-owned
//! buffers so fan-out sums naturally. The autograd tape in [`crate::graph`]
//! records which kernel produced which value and replays these backwards.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod pool;
pub mod softmax;

pub use activation::{relu_backward, relu_forward};
pub use batchnorm::{
    batchnorm_infer_backward, batchnorm_infer_forward, batchnorm_train_backward,
    batchnorm_train_forward, BnSaved, BnSpec, BN_EPSILON, BN_MOMENTUM,
};
pub use conv::{conv1d_backward, conv1d_forward, out_len, Conv1dSpec};
pub use dense::{fully_connected_backward, fully_connected_forward};
pub use pool::{
    global_avg_pool_backward, global_avg_pool_forward, maxpool1d_backward, maxpool1d_forward,
    Pool1dSpec,
};
pub use softmax::{
    softmax, softmax_cross_entropy_backward, softmax_cross_entropy_forward,
    softmax_cross_entropy_smoothed_backward, softmax_cross_entropy_smoothed_forward,
};
