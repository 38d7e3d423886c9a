use crate::blocks::layers::{join, ConvBn, Init, ParamMut, ParamRef, Parameters};
use crate::blocks::spec::MbConvSpec;
use crate::error::{ensure_eq, Result};
use crate::ops::{add_inplace, Activation, ConvParams};
use crate::tensor::Tensor;

/// Executable MBConv (fused or unfused) built from an [`MbConvSpec`].
#[derive(Clone, Debug)]
pub struct MbConv {
    spec: MbConvSpec,
    layers: Vec<(&'static str, ConvBn)>,
}

impl MbConv {
    pub fn new(spec: MbConvSpec, init: &Init, path: &str) -> Result<Self> {
        spec.validate()?;
        let hidden = spec.hidden();
        let act = spec.activation;
        let mut layers = Vec::with_capacity(3);
        if spec.fused {
            layers.push(("expand", ConvParams::square(spec.in_ch, hidden, 3, spec.stride), act));
        } else {
            layers.push(("expand", ConvParams::pointwise(spec.in_ch, hidden), act));
            layers.push(("dw", ConvParams::depthwise(hidden, 3, spec.stride), act));
        }
        layers.push(("project", ConvParams::pointwise(hidden, spec.out_ch), Activation::Identity));
        let layers = layers
            .into_iter()
            .map(|(name, p, act)| Ok((name, ConvBn::new(p, act, init, &join(path, name))?)))
            .collect::<Result<_>>()?;
        Ok(MbConv { spec, layers })
    }

    pub fn spec(&self) -> &MbConvSpec {
        &self.spec
    }

    pub fn layers(&self) -> impl Iterator<Item = (&'static str, &ConvBn)> {
        self.layers.iter().map(|(n, l)| (*n, l))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ensure_eq("mbconv", "input channels", self.spec.in_ch, x.shape().c)?;
        let mut y = self.layers[0].1.forward(x)?;
        for (_, layer) in &self.layers[1..] {
            y = layer.forward(&y)?;
        }
        if self.spec.has_residual() {
            add_inplace(&mut y, x)?;
        }
        Ok(y)
    }
}

impl Parameters for MbConv {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        for (name, l) in &self.layers {
            l.params(&join(prefix, name), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        for (name, l) in &mut self.layers {
            l.params_mut(&join(prefix, name), out);
        }
    }
}
