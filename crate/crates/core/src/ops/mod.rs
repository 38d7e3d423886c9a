//! Tensor kernels.

mod conv;
mod elementwise;
mod matmul;

pub use conv::{conv2d, conv_transpose2d, conv_transpose2d_dw, ConvParams, TransposeParams};
pub use elementwise::{
    activation, activation_inplace, add, add_inplace, batch_norm_inference, batch_norm_inplace, gelu,
    global_avg_pool, layer_norm, softmax_lastdim, softmax_row, Activation,
};
pub use matmul::batched_matmul;
