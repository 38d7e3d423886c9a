//! Timed workloads: full models, single MBConvs, conv stacks and the
//! depthwise/standard toy networks.

use serde::{Deserialize, Serialize};

use crate::analyzer::{mbconv_costs, units, LayerCost};
use crate::blocks::{Conv2d, Init, MbConv, MbConvSpec, Parameters};
use crate::error::Result;
use crate::harness::Workload;
use crate::model::Model;
use crate::ops::{activation_inplace, Activation, ConvParams};
use crate::tensor::{Shape, Tensor};

/// Largest live input+output pair over a layer sequence, in bytes.
pub fn activation_bytes(layers: &[LayerCost]) -> u64 {
    layers
        .iter()
        .map(|l| 4 * (l.input.numel() + l.output.numel()) as u64)
        .max()
        .unwrap_or(0)
}

fn conv_chain_costs(convs: &[ConvParams], input: Shape) -> Result<Vec<LayerCost>> {
    let mut x = input;
    let mut out = Vec::with_capacity(convs.len());
    for (i, p) in convs.iter().enumerate() {
        let c = LayerCost::conv(format!("conv{i}"), p, x)?;
        x = c.output;
        out.push(c);
    }
    Ok(out)
}

pub struct ModelWorkload {
    pub model: Model,
    pub h: usize,
    pub w: usize,
}

impl Workload for ModelWorkload {
    fn input_shape(&self, batch: usize) -> Shape {
        Shape::new(batch, self.model.config().in_channels, self.h, self.w)
    }

    fn memory_bytes(&self, batch: usize) -> u64 {
        let layers: Vec<LayerCost> = units(self.model.layout(), batch, self.h, self.w)
            .map(|u| u.into_iter().flat_map(|u| u.layers).collect())
            .unwrap_or_default();
        activation_bytes(&layers) + 4 * self.model.param_count() as u64
    }

    fn run(&self, input: &Tensor) -> Result<()> {
        self.model.forward(input).map(|_| ())
    }
}

/// One MBConv at a fixed square resolution.
pub struct MbConvWorkload {
    pub block: MbConv,
    pub res: usize,
}

impl MbConvWorkload {
    pub fn new(spec: MbConvSpec, res: usize, seed: u64) -> Result<Self> {
        Ok(MbConvWorkload {
            block: MbConv::new(spec, &Init::new(seed), "block")?,
            res,
        })
    }
}

impl Workload for MbConvWorkload {
    fn input_shape(&self, batch: usize) -> Shape {
        Shape::new(batch, self.block.spec().in_ch, self.res, self.res)
    }

    fn memory_bytes(&self, batch: usize) -> u64 {
        let layers = mbconv_costs(self.block.spec(), "block", self.input_shape(batch)).unwrap_or_default();
        activation_bytes(&layers) + 4 * self.block.param_count() as u64
    }

    fn run(&self, input: &Tensor) -> Result<()> {
        self.block.forward(input).map(|_| ())
    }
}

/// Sequential convs, each followed by an activation.
pub struct ConvChain {
    pub convs: Vec<Conv2d>,
    pub activation: Activation,
    pub in_ch: usize,
    pub res: usize,
}

impl ConvChain {
    pub fn new(params: &[ConvParams], activation: Activation, res: usize, seed: u64) -> Result<Self> {
        let init = Init::new(seed);
        let convs = params
            .iter()
            .enumerate()
            .map(|(i, p)| Conv2d::new(*p, &init, &format!("conv{i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConvChain {
            in_ch: params.first().map_or(0, |p| p.in_ch),
            convs,
            activation,
            res,
        })
    }

    /// `depth` identical `k x k` stride-1 convs `C -> C`.
    pub fn stack(channels: usize, kernel: usize, depth: usize, res: usize, seed: u64) -> Result<Self> {
        let p = ConvParams::square(channels, channels, kernel, 1);
        Self::new(&vec![p; depth], Activation::Relu, res, seed)
    }

    pub fn params(&self) -> Vec<ConvParams> {
        self.convs.iter().map(|c| c.params).collect()
    }

    pub fn costs(&self, batch: usize) -> Result<Vec<LayerCost>> {
        conv_chain_costs(&self.params(), self.input_shape(batch))
    }
}

impl Workload for ConvChain {
    fn input_shape(&self, batch: usize) -> Shape {
        Shape::new(batch, self.in_ch, self.res, self.res)
    }

    fn memory_bytes(&self, batch: usize) -> u64 {
        let weights: u64 = self.convs.iter().map(|c| 4 * c.weight.data().len() as u64).sum();
        activation_bytes(&self.costs(batch).unwrap_or_default()) + weights
    }

    fn run(&self, input: &Tensor) -> Result<()> {
        let mut iter = self.convs.iter();
        let Some(first) = iter.next() else { return Ok(()) };
        let mut y = first.forward(input)?;
        activation_inplace(&mut y, self.activation);
        for c in iter {
            y = c.forward(&y)?;
            activation_inplace(&mut y, self.activation);
        }
        Ok(())
    }
}

/// Five-stage toy network for the depthwise-vs-standard study.
///
/// Stem: 3x3 stride-2 conv 3 -> C0. Stage i > 0 opens with a stride-2
/// block C_{i-1} -> C_i, then `depths[i]` stride-1 blocks. A standard
/// block is one 3x3 conv; a depthwise block is a 3x3 DW conv then a 1x1 PW.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToySpec {
    pub id: usize,
    pub channels: [usize; 5],
    pub depthwise: bool,
    pub depths: [usize; 5],
}

/// Stride-1 blocks per stage, frozen for all six toy models.
pub const TOY_DEPTHS: [usize; 5] = [0, 3, 5, 5, 5];

impl ToySpec {
    /// The three standard/depthwise pairs, ids 1..=6 (odd = standard).
    pub fn published_set() -> Vec<ToySpec> {
        let sets: [([usize; 5], bool); 6] = [
            ([17, 34, 68, 136, 273], false),
            ([30, 60, 120, 240, 480], true),
            ([32, 65, 130, 260, 260], false),
            ([60, 120, 240, 480, 480], true),
            ([32, 96, 193, 387, 387], false),
            ([60, 180, 360, 720, 720], true),
        ];
        sets.into_iter()
            .enumerate()
            .map(|(i, (channels, depthwise))| ToySpec {
                id: i + 1,
                channels,
                depthwise,
                depths: TOY_DEPTHS,
            })
            .collect()
    }

    fn block(&self, in_ch: usize, out_ch: usize, stride: usize, out: &mut Vec<ConvParams>) {
        if self.depthwise {
            out.push(ConvParams::depthwise(in_ch, 3, stride));
            out.push(ConvParams::pointwise(in_ch, out_ch));
        } else {
            out.push(ConvParams::square(in_ch, out_ch, 3, stride));
        }
    }

    pub fn layers(&self) -> Vec<ConvParams> {
        let c = &self.channels;
        let mut out = vec![ConvParams::square(3, c[0], 3, 2)];
        for i in 0..5 {
            if i > 0 {
                self.block(c[i - 1], c[i], 2, &mut out);
            }
            for _ in 0..self.depths[i] {
                self.block(c[i], c[i], 1, &mut out);
            }
        }
        out
    }

    pub fn macs(&self, res: usize) -> Result<u64> {
        Ok(conv_chain_costs(&self.layers(), Shape::new(1, 3, res, res))?.iter().map(|l| l.macs).sum())
    }

    pub fn build(&self, res: usize, seed: u64) -> Result<ConvChain> {
        ConvChain::new(&self.layers(), Activation::Relu, res, seed)
    }
}
