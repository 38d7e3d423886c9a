//! LowFormer B0..B3 networks and their ablation variants.

mod config;
mod describe;
mod layout;
mod network;

pub use config::{Ablation, ModelConfig, Variant, NUM_STAGES};
pub use describe::{format_table, DescribeRow};
pub use layout::{ModelLayout, StageLayout, INPUT_ALIGN};
pub use network::{Block, Model, Stage};
