//! Differentiable numeric kernels with hand-written reverse-mode gradients.
//!
//! Layers are plain parameter structs. A forward pass borrows the parameters
//! immutably and returns the output together with a cache; the backward pass
//! consumes the cache, accumulates parameter gradients into a mirror struct
//! and returns the input gradient. Inference is therefore safe to share
//! across threads, and training owns its gradient buffers explicitly.

pub mod attention;
pub mod block;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod linalg;

pub use attention::{AttentionCache, AttentionGrads, MultiHeadAttention};
pub use block::{EncoderBlock, EncoderBlockCache, EncoderBlockGrads};
pub use conv::{CausalConv, CausalConvCache, CausalConvGrads};
pub use dense::{relu, relu_backward, Dense, DenseCache, DenseGrads, Dropout, Phase};
pub use gradcheck::{finite_diff_grad, grad_check, max_rel_error};

use ndarray::Array3;

/// Batched sequence tensor: (batch, time, channels).
pub type Tensor3 = Array3<f64>;
