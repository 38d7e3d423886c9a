//! Exact MAC and parameter accounting from layer specs.
//!
//! Conventions: a convolution costs `(in/g)·out·kh·kw` MACs per output
//! pixel, a transposed convolution the same per *input* pixel, SDA costs
//! `2·N²·d` per head (QKᵀ and AV), a linear layer `in·out`. Normalization,
//! activations, softmax, pooling and residual adds cost nothing. Parameters
//! count every stored float, including biases and norm affine terms.

mod count;

pub use count::{block_costs, mbconv_costs, units, Unit, UnitKind};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Ablation, ModelLayout};
use crate::ops::{ConvParams, TransposeParams};
use crate::tensor::Shape;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const CONVENTIONS: [&str; 4] = [
    "conv: (in/groups)*out*kh*kw*H_out*W_out*n; transposed conv uses H_in*W_in",
    "sda: 2*N^2*d*n per head (QK^T and AV), softmax excluded",
    "linear: in*out*n",
    "norm, activation, softmax, pooling and residual adds are 0 MACs; params count every stored float",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    PointwiseConv,
    DepthwiseConv,
    TransposedConv,
    Sda,
    Linear,
    Norm,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCost {
    pub path: String,
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
    pub macs: u64,
    pub params: u64,
}

impl LayerCost {
    pub fn conv(path: String, p: &ConvParams, input: Shape) -> Result<Self> {
        p.validate()?;
        let (oh, ow) = p.output_hw(input.h, input.w)?;
        let output = Shape::new(input.n, p.out_ch, oh, ow);
        let (kh, kw) = p.kernel;
        let per_pixel = (p.in_ch / p.groups * p.out_ch * kh * kw) as u64;
        let kind = if p.is_depthwise() {
            LayerKind::DepthwiseConv
        } else if p.is_pointwise() {
            LayerKind::PointwiseConv
        } else {
            LayerKind::Conv
        };
        Ok(LayerCost {
            path,
            kind,
            input,
            output,
            macs: per_pixel * (input.n * oh * ow) as u64,
            params: per_pixel + if p.has_bias { p.out_ch as u64 } else { 0 },
        })
    }

    pub fn transposed(path: String, p: &TransposeParams, input: Shape) -> Result<Self> {
        p.validate()?;
        let (oh, ow) = p.output_hw(input.h, input.w)?;
        let (kh, kw) = p.kernel;
        let per_pixel = (p.in_ch / p.groups * p.out_ch * kh * kw) as u64;
        Ok(LayerCost {
            path,
            kind: LayerKind::TransposedConv,
            input,
            output: Shape::new(input.n, p.out_ch, oh, ow),
            macs: per_pixel * (input.n * input.h * input.w) as u64,
            params: per_pixel + if p.has_bias { p.out_ch as u64 } else { 0 },
        })
    }

    /// `heads` matrices of `tokens x head_dim`, batched over `n`.
    pub fn sda(path: String, input: Shape, heads: usize, head_dim: usize) -> Self {
        let tokens = (input.h * input.w) as u64;
        let output = Shape::new(input.n, heads * head_dim, input.h, input.w);
        LayerCost {
            path,
            kind: LayerKind::Sda,
            input,
            output,
            macs: 2 * tokens * tokens * (heads * head_dim * input.n) as u64,
            params: 0,
        }
    }

    pub fn linear(path: String, in_features: usize, out_features: usize, n: usize) -> Self {
        LayerCost {
            path,
            kind: LayerKind::Linear,
            input: Shape::new(n, in_features, 1, 1),
            output: Shape::new(n, out_features, 1, 1),
            macs: (in_features * out_features * n) as u64,
            params: (in_features * out_features + out_features) as u64,
        }
    }

    /// Per-channel affine norm (BN scale/shift or LN gamma/beta).
    pub fn norm(path: String, input: Shape) -> Self {
        LayerCost {
            path,
            kind: LayerKind::Norm,
            input,
            output: input,
            macs: 0,
            params: 2 * input.c as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub variant: String,
    pub ablation: Ablation,
    pub channels: Vec<usize>,
    pub depths: Vec<usize>,
    pub mlp_ratio: usize,
    pub head_dim: usize,
    pub expansion: usize,
    pub fusion_threshold: usize,
    pub attention_downsample: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacReport {
    pub schema_version: u32,
    pub resolution: [usize; 2],
    pub batch: usize,
    pub config: ConfigEcho,
    pub conventions: Vec<String>,
    pub layers: Vec<LayerCost>,
    pub total_macs: u64,
    pub total_params: u64,
}

impl MacReport {
    pub fn macs_millions(&self) -> f64 {
        self.total_macs as f64 / 1e6
    }

    pub fn params_millions(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    /// Sum over layers whose path starts with `prefix`.
    pub fn macs_under(&self, prefix: &str) -> u64 {
        self.layers.iter().filter(|l| l.path.starts_with(prefix)).map(|l| l.macs).sum()
    }
}

/// Full-model MAC report at `h x w`, batch 1.
pub fn count(layout: &ModelLayout, h: usize, w: usize) -> Result<MacReport> {
    let layers: Vec<LayerCost> = units(layout, 1, h, w)?.into_iter().flat_map(|u| u.layers).collect();
    let cfg = &layout.config;
    Ok(MacReport {
        schema_version: REPORT_SCHEMA_VERSION,
        resolution: [h, w],
        batch: 1,
        config: ConfigEcho {
            variant: cfg.name.clone(),
            ablation: layout.ablation,
            channels: cfg.channels.to_vec(),
            depths: cfg.depths.to_vec(),
            mlp_ratio: cfg.mlp_ratio,
            head_dim: cfg.head_dim,
            expansion: cfg.expansion,
            fusion_threshold: cfg.fusion_threshold,
            attention_downsample: cfg.attention_downsample.to_vec(),
        },
        conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
        total_macs: layers.iter().map(|l| l.macs).sum(),
        total_params: layers.iter().map(|l| l.params).sum(),
        layers,
    })
}

/// Fused over unfused MACs of a stride-1 MBConv with `C -> C` channels:
/// `10·e·C² / (2·e·C² + 9·e·C)`. Resolution cancels.
pub fn mbconv_mac_ratio(channels: usize, expansion: usize) -> f64 {
    let (c, e) = (channels as f64, expansion as f64);
    // fused: 9·C·eC + eC·C; unfused: C·eC + 9·eC + eC·C
    (10.0 * e * c * c) / (2.0 * e * c * c + 9.0 * e * c)
}

/// MACs of `depth` stacked `k x k` stride-1 convs at (res_a, ch_a) over the
/// same stack at (res_b, ch_b).
pub fn scenario_mac_ratio(res_a: usize, ch_a: usize, res_b: usize, ch_b: usize, kernel: usize, depth: usize) -> f64 {
    let cost = |res: usize, ch: usize| (depth * kernel * kernel) as u128 * (ch * ch) as u128 * (res * res) as u128;
    cost(res_a, ch_a) as f64 / cost(res_b, ch_b) as f64
}
