//! Inference, MAC accounting and hardware-efficiency benchmarks for the
//! LowFormer convolutional-transformer backbones.
//!
//! * [`ops`] dense NCHW kernels with fixed per-element summation order
//! * [`blocks`] MBConv (fused/unfused), LowFormer attention and block
//! * [`model`] B0..B3 builders, ablation variants, forward and describe
//! * [`analyzer`] exact MAC/parameter counts from layer specs
//! * [`harness`] timing protocol and the execution-time studies
//! * [`io`] weight files, JSON/CSV reports and SVG heatmaps

pub mod analyzer;
pub mod blocks;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod ops;
pub mod par;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{BatchMatrix, Shape, Tensor};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
