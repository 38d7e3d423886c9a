use serde::{Deserialize, Serialize};

use crate::analyzer::LayerCost;
use crate::blocks::{AttentionSpec, BlockSpec, LowFormerBlockSpec, MbConvSpec, MlpSpec};
use crate::error::Result;
use crate::model::ModelLayout;
use crate::ops::{ConvParams, TransposeParams};
use crate::tensor::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Stem,
    Mbconv,
    Attention,
    Mlp,
    Head,
}

/// One row of the block-level model description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unit {
    pub path: String,
    pub kind: UnitKind,
    pub stride: usize,
    pub fused: Option<bool>,
    pub input: Shape,
    pub output: Shape,
    pub layers: Vec<LayerCost>,
}

impl Unit {
    fn new(path: String, kind: UnitKind, stride: usize, fused: Option<bool>, input: Shape, layers: Vec<LayerCost>) -> Self {
        let output = layers.last().map_or(input, |l| l.output);
        Unit {
            path,
            kind,
            stride,
            fused,
            input,
            output,
            layers,
        }
    }

    pub fn macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    pub fn params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn conv_bn(path: &str, p: &ConvParams, input: Shape, out: &mut Vec<LayerCost>) -> Result<Shape> {
    let c = LayerCost::conv(path.to_string(), p, input)?;
    let o = c.output;
    out.push(c);
    out.push(LayerCost::norm(join(path, "bn"), o));
    Ok(o)
}

pub fn mbconv_costs(spec: &MbConvSpec, path: &str, input: Shape) -> Result<Vec<LayerCost>> {
    spec.validate()?;
    crate::error::ensure_eq("mbconv", "input channels", spec.in_ch, input.c)?;
    let hidden = spec.hidden();
    let mut out = Vec::new();
    let mut x = input;
    if spec.fused {
        x = conv_bn(&join(path, "expand"), &ConvParams::square(spec.in_ch, hidden, 3, spec.stride), x, &mut out)?;
    } else {
        x = conv_bn(&join(path, "expand"), &ConvParams::pointwise(spec.in_ch, hidden), x, &mut out)?;
        x = conv_bn(&join(path, "dw"), &ConvParams::depthwise(hidden, 3, spec.stride), x, &mut out)?;
    }
    conv_bn(&join(path, "project"), &ConvParams::pointwise(hidden, spec.out_ch), x, &mut out)?;
    Ok(out)
}

pub fn attention_costs(spec: &AttentionSpec, path: &str, input: Shape) -> Result<Vec<LayerCost>> {
    spec.validate()?;
    spec.check_input(input.c, input.h, input.w)?;
    let (c, half) = (spec.channels, spec.compressed());
    let mut out = Vec::new();
    let down = LayerCost::conv(
        join(path, "down"),
        &ConvParams::depthwise(c, spec.kernel, spec.downsample).with_bias(true),
        input,
    )?;
    let qkv = LayerCost::conv(join(path, "qkv"), &ConvParams::pointwise(c, 3 * half).with_bias(true), down.output)?;
    let sda = LayerCost::sda(join(path, "sda"), qkv.output, spec.heads, spec.head_dim());
    let merged = sda.output;
    out.extend([down, qkv, sda]);
    if spec.fuse_output {
        out.push(LayerCost::transposed(
            join(path, "out"),
            &TransposeParams::upsample(half, c, spec.kernel, spec.downsample).with_bias(true),
            merged,
        )?);
    } else {
        let proj = LayerCost::conv(join(path, "proj"), &ConvParams::pointwise(half, c).with_bias(true), merged)?;
        let up = LayerCost::transposed(
            join(path, "up"),
            &TransposeParams::depthwise_upsample(c, spec.kernel, spec.downsample).with_bias(true),
            proj.output,
        )?;
        out.extend([proj, up]);
    }
    Ok(out)
}

pub fn mlp_costs(spec: &MlpSpec, path: &str, input: Shape) -> Result<Vec<LayerCost>> {
    crate::error::ensure_eq("mlp", "input channels", spec.channels, input.c)?;
    let hidden = spec.hidden();
    let fc1 = LayerCost::conv(join(path, "fc1"), &ConvParams::pointwise(spec.channels, hidden).with_bias(true), input)?;
    let fc2 = LayerCost::conv(
        join(path, "fc2"),
        &ConvParams::pointwise(hidden, spec.channels).with_bias(true),
        fc1.output,
    )?;
    Ok(vec![LayerCost::norm(join(path, "norm"), input), fc1, fc2])
}

pub fn lowformer_costs(spec: &LowFormerBlockSpec, path: &str, input: Shape) -> Result<Vec<LayerCost>> {
    let mut out = attention_costs(&spec.attention, &join(path, "attn"), input)?;
    out.extend(mlp_costs(&spec.mlp, &join(path, "mlp"), input)?);
    Ok(out)
}

/// Layer costs of one block at `input` (`n` included in the shape).
pub fn block_costs(spec: &BlockSpec, path: &str, input: Shape) -> Result<Vec<LayerCost>> {
    match spec {
        BlockSpec::MbConv(m) => mbconv_costs(m, path, input),
        BlockSpec::LowFormer(l) => lowformer_costs(l, path, input),
    }
}

fn mbconv_unit(spec: &MbConvSpec, path: String, input: Shape) -> Result<Unit> {
    let layers = mbconv_costs(spec, &path, input)?;
    Ok(Unit::new(path, UnitKind::Mbconv, spec.stride, Some(spec.fused), input, layers))
}

/// Walk the network at `n x 3 x h x w`, one unit per stem / MBConv /
/// attention / MLP / head.
pub fn units(layout: &ModelLayout, n: usize, h: usize, w: usize) -> Result<Vec<Unit>> {
    layout.check_input(layout.config.in_channels, h, w)?;
    let input = Shape::new(n, layout.config.in_channels, h, w);
    let mut rows = Vec::new();
    let mut stem = Vec::new();
    let mut x = conv_bn("stem.conv", &layout.stem, input, &mut stem)?;
    rows.push(Unit::new("stem".into(), UnitKind::Stem, layout.stem.stride.0, None, input, stem));
    for stage in &layout.stages {
        let prefix = format!("stage{}", stage.index);
        if let Some(d) = &stage.downsample {
            let u = mbconv_unit(d, join(&prefix, "down"), x)?;
            x = u.output;
            rows.push(u);
        }
        for (j, b) in stage.blocks.iter().enumerate() {
            let path = join(&prefix, &format!("block{j}"));
            match b {
                BlockSpec::MbConv(m) => {
                    let u = mbconv_unit(m, path, x)?;
                    x = u.output;
                    rows.push(u);
                }
                BlockSpec::LowFormer(l) => {
                    let attn = join(&path, "attn");
                    let layers = attention_costs(&l.attention, &attn, x)?;
                    let mut u = Unit::new(attn, UnitKind::Attention, l.attention.downsample, Some(l.attention.fuse_output), x, layers);
                    u.output = x;
                    rows.push(u);
                    let mlp = join(&path, "mlp");
                    let layers = mlp_costs(&l.mlp, &mlp, x)?;
                    rows.push(Unit::new(mlp, UnitKind::Mlp, 1, None, x, layers));
                }
            }
        }
    }
    let fc = LayerCost::linear("head.fc".into(), layout.head_in, layout.num_classes, n);
    crate::error::ensure_eq("head", "input channels", layout.head_in, x.c)?;
    rows.push(Unit::new("head".into(), UnitKind::Head, 1, None, x, vec![fc]));
    Ok(rows)
}
