use crate::blocks::attention::LowFormerAttention;
use crate::blocks::layers::{join, Conv2d, Init, LayerNorm, ParamMut, ParamRef, Parameters};
use crate::blocks::spec::{LowFormerBlockSpec, MlpSpec};
use crate::error::{ensure_eq, Result};
use crate::ops::{activation_inplace, add_inplace, ConvParams};
use crate::tensor::Tensor;

/// Channel-wise MLP: LN -> PW (C -> rC) -> activation -> PW (rC -> C).
#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    pub norm: LayerNorm,
    pub fc1: Conv2d,
    pub fc2: Conv2d,
}

impl Mlp {
    pub fn new(spec: MlpSpec, init: &Init, path: &str) -> Result<Self> {
        let hidden = spec.hidden();
        Ok(Mlp {
            spec,
            norm: LayerNorm::new(spec.channels),
            fc1: Conv2d::new(ConvParams::pointwise(spec.channels, hidden).with_bias(true), init, &join(path, "fc1"))?,
            fc2: Conv2d::new(ConvParams::pointwise(hidden, spec.channels).with_bias(true), init, &join(path, "fc2"))?,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ensure_eq("mlp", "input channels", self.spec.channels, x.shape().c)?;
        let mut h = self.fc1.forward(&self.norm.forward(x)?)?;
        activation_inplace(&mut h, self.spec.activation);
        self.fc2.forward(&h)
    }
}

impl Parameters for Mlp {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        self.norm.params(&join(prefix, "norm"), out);
        self.fc1.params(&join(prefix, "fc1"), out);
        self.fc2.params(&join(prefix, "fc2"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        self.norm.params_mut(&join(prefix, "norm"), out);
        self.fc1.params_mut(&join(prefix, "fc1"), out);
        self.fc2.params_mut(&join(prefix, "fc2"), out);
    }
}

/// `y = x + attn(x); z = y + mlp(y)`.
#[derive(Clone, Debug)]
pub struct LowFormerBlock {
    spec: LowFormerBlockSpec,
    pub attn: LowFormerAttention,
    pub mlp: Mlp,
}

impl LowFormerBlock {
    pub fn new(spec: LowFormerBlockSpec, init: &Init, path: &str) -> Result<Self> {
        Ok(LowFormerBlock {
            spec,
            attn: LowFormerAttention::new(spec.attention, init, &join(path, "attn"))?,
            mlp: Mlp::new(spec.mlp, init, &join(path, "mlp"))?,
        })
    }

    pub fn spec(&self) -> &LowFormerBlockSpec {
        &self.spec
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.attn.forward(x)?;
        add_inplace(&mut y, x)?;
        let mut z = self.mlp.forward(&y)?;
        add_inplace(&mut z, &y)?;
        Ok(z)
    }
}

impl Parameters for LowFormerBlock {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        self.attn.params(&join(prefix, "attn"), out);
        self.mlp.params(&join(prefix, "mlp"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        self.attn.params_mut(&join(prefix, "attn"), out);
        self.mlp.params_mut(&join(prefix, "mlp"), out);
    }
}
