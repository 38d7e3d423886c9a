//! Weight-carrying layers shared by every block.

use crate::error::{ensure_eq, Result};
use crate::ops::{
    activation_inplace, batch_norm_inplace, conv2d, conv_transpose2d, layer_norm, Activation, ConvParams,
    TransposeParams,
};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// Borrowed view of one named parameter tensor.
pub struct ParamRef<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [f32],
}

pub struct ParamMut<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a mut [f32],
}

/// Enumerates parameters in a fixed order under dotted layer paths.
pub trait Parameters {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>);
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>);

    fn param_count(&self) -> usize {
        let mut v = Vec::new();
        self.params("", &mut v);
        v.iter().map(|p| p.data.len()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Seeded initializer: weights and biases uniform in `±1/sqrt(fan_in)`, one
/// SplitMix64 stream per parameter path.
#[derive(Clone, Copy, Debug)]
pub struct Init {
    pub seed: u64,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init { seed }
    }

    pub fn uniform(&self, path: &str, len: usize, fan_in: usize) -> Vec<f32> {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        Rng::for_path(self.seed, path).fill_uniform(len, bound)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub params: ConvParams,
    pub weight: Tensor,
    pub bias: Option<Vec<f32>>,
}

impl Conv2d {
    pub fn new(params: ConvParams, init: &Init, path: &str) -> Result<Self> {
        params.validate()?;
        let ws = params.weight_shape();
        let weight = Tensor::from_raw(ws, init.uniform(&join(path, "weight"), ws.numel(), params.fan_in()));
        let bias = params.has_bias.then(|| init.uniform(&join(path, "bias"), params.out_ch, params.fan_in()));
        Ok(Conv2d { params, weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weight, self.bias.as_deref(), &self.params)
    }
}

impl Parameters for Conv2d {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "weight"),
            dims: self.weight.shape().dims().to_vec(),
            data: self.weight.data(),
        });
        if let Some(b) = &self.bias {
            out.push(ParamRef {
                name: join(prefix, "bias"),
                dims: vec![b.len()],
                data: b,
            });
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        let dims = self.weight.shape().dims().to_vec();
        out.push(ParamMut {
            name: join(prefix, "weight"),
            dims,
            data: self.weight.data_mut(),
        });
        if let Some(b) = &mut self.bias {
            out.push(ParamMut {
                name: join(prefix, "bias"),
                dims: vec![b.len()],
                data: b,
            });
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub params: TransposeParams,
    pub weight: Tensor,
    pub bias: Option<Vec<f32>>,
}

impl ConvTranspose2d {
    pub fn new(params: TransposeParams, init: &Init, path: &str) -> Result<Self> {
        params.validate()?;
        let ws = params.weight_shape();
        let weight = Tensor::from_raw(ws, init.uniform(&join(path, "weight"), ws.numel(), params.fan_in()));
        let bias = params.has_bias.then(|| init.uniform(&join(path, "bias"), params.out_ch, params.fan_in()));
        Ok(ConvTranspose2d { params, weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv_transpose2d(x, &self.weight, self.bias.as_deref(), &self.params)
    }
}

impl Parameters for ConvTranspose2d {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "weight"),
            dims: self.weight.shape().dims().to_vec(),
            data: self.weight.data(),
        });
        if let Some(b) = &self.bias {
            out.push(ParamRef {
                name: join(prefix, "bias"),
                dims: vec![b.len()],
                data: b,
            });
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        let dims = self.weight.shape().dims().to_vec();
        out.push(ParamMut {
            name: join(prefix, "weight"),
            dims,
            data: self.weight.data_mut(),
        });
        if let Some(b) = &mut self.bias {
            out.push(ParamMut {
                name: join(prefix, "bias"),
                dims: vec![b.len()],
                data: b,
            });
        }
    }
}

/// Inference batch norm in folded form.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

impl BatchNorm {
    pub fn identity(ch: usize) -> Self {
        BatchNorm {
            scale: vec![1.0; ch],
            shift: vec![0.0; ch],
        }
    }
}

impl Parameters for BatchNorm {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "scale"),
            dims: vec![self.scale.len()],
            data: &self.scale,
        });
        out.push(ParamRef {
            name: join(prefix, "shift"),
            dims: vec![self.shift.len()],
            data: &self.shift,
        });
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            name: join(prefix, "scale"),
            dims: vec![self.scale.len()],
            data: &mut self.scale,
        });
        out.push(ParamMut {
            name: join(prefix, "shift"),
            dims: vec![self.shift.len()],
            data: &mut self.shift,
        });
    }
}

/// Conv -> batch norm -> activation (`Identity` for norm-only projections).
#[derive(Clone, Debug)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm,
    pub act: Activation,
}

impl ConvBn {
    pub fn new(params: ConvParams, act: Activation, init: &Init, path: &str) -> Result<Self> {
        let conv = Conv2d::new(params, init, path)?;
        Ok(ConvBn {
            bn: BatchNorm::identity(params.out_ch),
            conv,
            act,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.conv.forward(x)?;
        batch_norm_inplace(&mut y, &self.bn.scale, &self.bn.shift)?;
        activation_inplace(&mut y, self.act);
        Ok(y)
    }
}

impl Parameters for ConvBn {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        self.conv.params(prefix, out);
        self.bn.params(&join(prefix, "bn"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        self.conv.params_mut(prefix, out);
        self.bn.params_mut(&join(prefix, "bn"), out);
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub eps: f32,
}

impl LayerNorm {
    pub const EPS: f32 = 1e-5;

    pub fn new(ch: usize) -> Self {
        LayerNorm {
            gamma: vec![1.0; ch],
            beta: vec![0.0; ch],
            eps: Self::EPS,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, &self.gamma, &self.beta, self.eps)
    }
}

impl Parameters for LayerNorm {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "gamma"),
            dims: vec![self.gamma.len()],
            data: &self.gamma,
        });
        out.push(ParamRef {
            name: join(prefix, "beta"),
            dims: vec![self.beta.len()],
            data: &self.beta,
        });
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            name: join(prefix, "gamma"),
            dims: vec![self.gamma.len()],
            data: &mut self.gamma,
        });
        out.push(ParamMut {
            name: join(prefix, "beta"),
            dims: vec![self.beta.len()],
            data: &mut self.beta,
        });
    }
}

/// Fully connected layer on `(n, in, 1, 1)` features; weight is `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, init: &Init, path: &str) -> Self {
        Linear {
            in_features,
            out_features,
            weight: init.uniform(&join(path, "weight"), in_features * out_features, in_features),
            bias: init.uniform(&join(path, "bias"), out_features, in_features),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        ensure_eq("linear", "input features", self.in_features, s.c * s.h * s.w)?;
        let mut out = Vec::with_capacity(s.n * self.out_features);
        for row in x.data().chunks(self.in_features) {
            for o in 0..self.out_features {
                let w = &self.weight[o * self.in_features..(o + 1) * self.in_features];
                let acc = row.iter().zip(w).fold(0.0f32, |a, (x, w)| a + x * w);
                out.push(acc + self.bias[o]);
            }
        }
        Tensor::new(Shape::new(s.n, self.out_features, 1, 1), out)
    }
}

impl Parameters for Linear {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "weight"),
            dims: vec![self.out_features, self.in_features],
            data: &self.weight,
        });
        out.push(ParamRef {
            name: join(prefix, "bias"),
            dims: vec![self.out_features],
            data: &self.bias,
        });
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            name: join(prefix, "weight"),
            dims: vec![self.out_features, self.in_features],
            data: &mut self.weight,
        });
        out.push(ParamMut {
            name: join(prefix, "bias"),
            dims: vec![self.out_features],
            data: &mut self.bias,
        });
    }
}
