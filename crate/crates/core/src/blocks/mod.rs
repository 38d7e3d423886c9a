//! MBConv, LowFormer attention and the LowFormer block.

mod attention;
mod layers;
mod lowformer;
mod mbconv;
mod spec;

pub use attention::{merge_heads, sda, split_heads, AttentionTrace, LowFormerAttention, OutputProjection};
pub(crate) use layers::join;
pub use layers::{BatchNorm, Conv2d, ConvBn, ConvTranspose2d, Init, LayerNorm, Linear, ParamMut, ParamRef, Parameters};
pub use lowformer::{LowFormerBlock, Mlp};
pub use mbconv::MbConv;
pub use spec::{AttentionSpec, BlockSpec, LowFormerBlockSpec, MbConvSpec, MlpSpec};
