//! Normalization, activations, pooling, softmax and residual adds.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_eq, Error, Result};
use crate::tensor::{BatchMatrix, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f32) -> f32 {
        match self {
            Activation::Gelu => gelu(v),
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }
}

/// GELU, tanh form.
#[inline]
pub fn gelu(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    let mut y = x.clone();
    activation_inplace(&mut y, kind);
    y
}

pub fn activation_inplace(x: &mut Tensor, kind: Activation) {
    if kind != Activation::Identity {
        x.data_mut().iter_mut().for_each(|v| *v = kind.apply(*v));
    }
}

/// Folded inference batch norm: `y = x * scale[c] + shift[c]`.
pub fn batch_norm_inference(x: &Tensor, scale: &[f32], shift: &[f32]) -> Result<Tensor> {
    let mut y = x.clone();
    batch_norm_inplace(&mut y, scale, shift)?;
    Ok(y)
}

pub fn batch_norm_inplace(x: &mut Tensor, scale: &[f32], shift: &[f32]) -> Result<()> {
    let s = x.shape();
    ensure_eq("batch_norm", "scale length", s.c, scale.len())?;
    ensure_eq("batch_norm", "shift length", s.c, shift.len())?;
    let plane = s.plane();
    for (i, chunk) in x.data_mut().chunks_mut(plane).enumerate() {
        let c = i % s.c;
        let (a, b) = (scale[c], shift[c]);
        chunk.iter_mut().for_each(|v| *v = *v * a + b);
    }
    Ok(())
}

/// Layer norm over the channel axis at every spatial position.
pub fn layer_norm(x: &Tensor, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Tensor> {
    let s = x.shape();
    ensure_eq("layer_norm", "gamma length", s.c, gamma.len())?;
    ensure_eq("layer_norm", "beta length", s.c, beta.len())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParams(format!("layer_norm eps must be > 0, got {eps}")));
    }
    let plane = s.plane();
    let inv_c = 1.0 / s.c as f32;
    let xd = x.data();
    let mut out = vec![0.0f32; s.numel()];
    for n in 0..s.n {
        let base = n * s.c * plane;
        let mut mean = vec![0.0f32; plane];
        for c in 0..s.c {
            let src = &xd[base + c * plane..][..plane];
            mean.iter_mut().zip(src).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m *= inv_c);
        let mut var = vec![0.0f32; plane];
        for c in 0..s.c {
            let src = &xd[base + c * plane..][..plane];
            var.iter_mut().zip(src.iter().zip(&mean)).for_each(|(acc, (v, m))| {
                let d = v - m;
                *acc += d * d;
            });
        }
        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v * inv_c + eps).sqrt()).collect();
        for c in 0..s.c {
            let src = &xd[base + c * plane..][..plane];
            let dst = &mut out[base + c * plane..][..plane];
            let (g, b) = (gamma[c], beta[c]);
            for i in 0..plane {
                dst[i] = (src[i] - mean[i]) * inv_std[i] * g + b;
            }
        }
    }
    Ok(Tensor::new(s, out).expect("shape preserved"))
}

pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let s = x.shape();
    let inv = 1.0 / s.plane() as f32;
    let data = x
        .data()
        .chunks(s.plane())
        .map(|p| p.iter().fold(0.0f32, |a, v| a + v) * inv)
        .collect();
    Tensor::new(Shape::new(s.n, s.c, 1, 1), data).expect("pooled shape")
}

pub fn add(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let mut out = x.clone();
    add_inplace(&mut out, y)?;
    Ok(out)
}

pub fn add_inplace(x: &mut Tensor, y: &Tensor) -> Result<()> {
    let (a, b) = (x.shape(), y.shape());
    ensure_eq("add", "batch", a.n, b.n)?;
    ensure_eq("add", "channels", a.c, b.c)?;
    ensure_eq("add", "height", a.h, b.h)?;
    ensure_eq("add", "width", a.w, b.w)?;
    x.data_mut().iter_mut().zip(y.data()).for_each(|(p, q)| *p += q);
    Ok(())
}

/// Numerically stable softmax over one row, in place.
pub fn softmax_row(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Softmax over the last dim of every matrix row.
pub fn softmax_lastdim(x: &BatchMatrix) -> BatchMatrix {
    let mut y = x.clone();
    let cols = y.cols;
    y.data_mut().chunks_mut(cols).for_each(softmax_row);
    y
}
