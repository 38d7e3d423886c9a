//! Naive reference kernels and a multiply-counting executor.
//!
//! Everything here is written as plain nested loops over explicitly padded
//! buffers, independent of the optimized kernels in `lowformer`. Each
//! kernel bumps a [`Counter`] once per multiply-accumulate, so counts can be
//! compared with the analyzer's closed-form MACs.

use lowformer::blocks::{
    ConvBn, Conv2d, ConvTranspose2d, LayerNorm, Linear, LowFormerAttention, LowFormerBlock, MbConv, Mlp,
    OutputProjection,
};
use lowformer::model::{Block, Model};
use lowformer::ops::{Activation, ConvParams, TransposeParams};
use lowformer::{BatchMatrix, Shape, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counter {
    pub macs: u64,
}

fn idx(s: Shape, n: usize, c: usize, h: usize, w: usize) -> usize {
    ((n * s.c + c) * s.h + h) * s.w + w
}

/// Zero-padded copy of `x` with `ph`/`pw` on every side.
fn pad(x: &Tensor, ph: usize, pw: usize) -> Tensor {
    let s = x.shape();
    let ps = Shape::new(s.n, s.c, s.h + 2 * ph, s.w + 2 * pw);
    let mut out = vec![0.0f32; ps.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            for h in 0..s.h {
                for w in 0..s.w {
                    out[idx(ps, n, c, h + ph, w + pw)] = x.at(n, c, h, w);
                }
            }
        }
    }
    Tensor::new(ps, out).unwrap()
}

/// Seven nested loops; the reduction runs `ci, ky, kx` from zero and bias is added last.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&[f32]>, p: &ConvParams, counter: &mut Counter) -> Tensor {
    let s = x.shape();
    let (kh, kw) = p.kernel;
    let (sh, sw) = p.stride;
    let xp = pad(x, p.padding.0, p.padding.1);
    let ps = xp.shape();
    let oh = (ps.h - kh) / sh + 1;
    let ow = (ps.w - kw) / sw + 1;
    let ipg = p.in_ch / p.groups;
    let opg = p.out_ch / p.groups;
    let os = Shape::new(s.n, p.out_ch, oh, ow);
    let mut out = vec![0.0f32; os.numel()];
    for n in 0..s.n {
        for o in 0..p.out_ch {
            let g = o / opg;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for cl in 0..ipg {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let xv = xp.at(n, g * ipg + cl, oy * sh + ky, ox * sw + kx);
                                acc += xv * weight.at(o, cl, ky, kx);
                                counter.macs += 1;
                            }
                        }
                    }
                    if let Some(b) = bias {
                        acc += b[o];
                    }
                    out[idx(os, n, o, oy, ox)] = acc;
                }
            }
        }
    }
    Tensor::new(os, out).unwrap()
}

/// Scatter every input pixel through every tap into an uncropped buffer,
/// then crop `padding` from the top/left and bottom/right.
pub fn conv_transpose2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&[f32]>,
    p: &TransposeParams,
    counter: &mut Counter,
) -> Tensor {
    let s = x.shape();
    let (kh, kw) = p.kernel;
    let (sh, sw) = p.stride;
    let (ph, pw) = p.padding;
    let fh = (s.h - 1) * sh + kh + p.output_padding.0;
    let fw = (s.w - 1) * sw + kw + p.output_padding.1;
    let fs = Shape::new(s.n, p.out_ch, fh, fw);
    let mut full = vec![0.0f32; fs.numel()];
    let ipg = p.in_ch / p.groups;
    let opg = p.out_ch / p.groups;
    for n in 0..s.n {
        for ci in 0..p.in_ch {
            let g = ci / ipg;
            for ky in 0..kh {
                for kx in 0..kw {
                    for iy in 0..s.h {
                        for ix in 0..s.w {
                            for ol in 0..opg {
                                let o = g * opg + ol;
                                full[idx(fs, n, o, iy * sh + ky, ix * sw + kx)] +=
                                    x.at(n, ci, iy, ix) * weight.at(ci, ol, ky, kx);
                                counter.macs += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    let (oh, ow) = (fh - 2 * ph, fw - 2 * pw);
    let os = Shape::new(s.n, p.out_ch, oh, ow);
    let mut out = vec![0.0f32; os.numel()];
    for n in 0..s.n {
        for o in 0..p.out_ch {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut v = full[idx(fs, n, o, y + ph, xx + pw)];
                    if let Some(b) = bias {
                        v += b[o];
                    }
                    out[idx(os, n, o, y, xx)] = v;
                }
            }
        }
    }
    Tensor::new(os, out).unwrap()
}

/// Triple loop per matrix, `k` ascending.
pub fn matmul(a: &BatchMatrix, b: &BatchMatrix, counter: &mut Counter) -> BatchMatrix {
    let mut out = Vec::with_capacity(a.batch * a.rows * b.cols);
    for bt in 0..a.batch {
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut acc = 0.0f32;
                for k in 0..a.cols {
                    acc += a.at(bt, i, k) * b.at(bt, k, j);
                    counter.macs += 1;
                }
                out.push(acc);
            }
        }
    }
    BatchMatrix::new(a.batch, a.rows, b.cols, out).unwrap()
}

/// `softmax(q·kᵀ / sqrt(d))·v`, written out element by element.
pub fn sda(q: &BatchMatrix, k: &BatchMatrix, v: &BatchMatrix, counter: &mut Counter) -> BatchMatrix {
    let (nq, nk, d) = (q.rows, k.rows, q.cols);
    let scale = 1.0 / (d as f32).sqrt();
    let mut out = Vec::with_capacity(q.batch * nq * v.cols);
    for b in 0..q.batch {
        for i in 0..nq {
            let mut scores = vec![0.0f32; nk];
            for (j, s) in scores.iter_mut().enumerate() {
                let mut acc = 0.0f32;
                for t in 0..d {
                    acc += q.at(b, i, t) * k.at(b, j, t);
                    counter.macs += 1;
                }
                *s = acc * scale;
            }
            let mut max = f32::NEG_INFINITY;
            for &s in &scores {
                max = max.max(s);
            }
            let mut sum = 0.0f32;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            for s in scores.iter_mut() {
                *s /= sum;
            }
            for c in 0..v.cols {
                let mut acc = 0.0f32;
                for (j, &p) in scores.iter().enumerate() {
                    acc += p * v.at(b, j, c);
                    counter.macs += 1;
                }
                out.push(acc);
            }
        }
    }
    BatchMatrix::new(q.batch, nq, v.cols, out).unwrap()
}

fn gelu(x: f32) -> f32 {
    let inner = 0.797_884_6f32 * (x + 0.044_715 * x * x * x);
    0.5 * x * (1.0 + inner.tanh())
}

fn act(x: &mut Tensor, a: Activation) {
    for v in x.data_mut() {
        *v = match a {
            Activation::Gelu => gelu(*v),
            Activation::Relu => v.max(0.0),
            Activation::Identity => *v,
        };
    }
}

fn add(x: &Tensor, y: &Tensor) -> Tensor {
    let data = x.data().iter().zip(y.data()).map(|(a, b)| a + b).collect();
    Tensor::new(x.shape(), data).unwrap()
}

fn conv(c: &Conv2d, x: &Tensor, counter: &mut Counter) -> Tensor {
    conv2d(x, &c.weight, c.bias.as_deref(), &c.params, counter)
}

fn tconv(c: &ConvTranspose2d, x: &Tensor, counter: &mut Counter) -> Tensor {
    conv_transpose2d(x, &c.weight, c.bias.as_deref(), &c.params, counter)
}

fn conv_bn(l: &ConvBn, x: &Tensor, counter: &mut Counter) -> Tensor {
    let mut y = conv(&l.conv, x, counter);
    let s = y.shape();
    let (scale, shift) = (&l.bn.scale, &l.bn.shift);
    let data = y.data_mut();
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..s.plane() {
                let j = (n * s.c + c) * s.plane() + i;
                data[j] = data[j] * scale[c] + shift[c];
            }
        }
    }
    act(&mut y, l.act);
    y
}

fn layer_norm(l: &LayerNorm, x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = x.clone();
    for n in 0..s.n {
        for h in 0..s.h {
            for w in 0..s.w {
                let vals: Vec<f32> = (0..s.c).map(|c| x.at(n, c, h, w)).collect();
                let mean = vals.iter().sum::<f32>() / s.c as f32;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / s.c as f32;
                let inv = 1.0 / (var + l.eps).sqrt();
                for c in 0..s.c {
                    out.data_mut()[idx(s, n, c, h, w)] = (vals[c] - mean) * inv * l.gamma[c] + l.beta[c];
                }
            }
        }
    }
    out
}

fn linear(l: &Linear, x: &Tensor, counter: &mut Counter) -> Tensor {
    let s = x.shape();
    let mut out = Vec::with_capacity(s.n * l.out_features);
    for n in 0..s.n {
        for o in 0..l.out_features {
            let mut acc = 0.0f32;
            for i in 0..l.in_features {
                acc += x.data()[n * l.in_features + i] * l.weight[o * l.in_features + i];
                counter.macs += 1;
            }
            out.push(acc + l.bias[o]);
        }
    }
    Tensor::new(Shape::new(s.n, l.out_features, 1, 1), out).unwrap()
}

pub fn mbconv(b: &MbConv, x: &Tensor, counter: &mut Counter) -> Tensor {
    let mut y = x.clone();
    for (_, l) in b.layers() {
        y = conv_bn(l, &y, counter);
    }
    if b.spec().has_residual() {
        add(&y, x)
    } else {
        y
    }
}

/// Attention body without the residual.
pub fn attention(a: &LowFormerAttention, x: &Tensor, counter: &mut Counter) -> Tensor {
    let spec = a.spec();
    let heads = spec.heads;
    let half = spec.compressed();
    let d = half / heads;
    let down = conv(&a.down, x, counter);
    let qkv = conv(&a.qkv, &down, counter);
    let s = qkv.shape();
    let tokens = s.h * s.w;
    let part = |offset: usize| {
        let mut data = Vec::with_capacity(s.n * heads * tokens * d);
        for n in 0..s.n {
            for h in 0..heads {
                for t in 0..tokens {
                    for j in 0..d {
                        data.push(qkv.at(n, offset + h * d + j, t / s.w, t % s.w));
                    }
                }
            }
        }
        BatchMatrix::new(s.n * heads, tokens, d, data).unwrap()
    };
    let (q, k, v) = (part(0), part(half), part(2 * half));
    let att = sda(&q, &k, &v, counter);
    let ms = Shape::new(s.n, half, s.h, s.w);
    let mut merged = vec![0.0f32; ms.numel()];
    for n in 0..s.n {
        for c in 0..half {
            for t in 0..tokens {
                merged[idx(ms, n, c, t / s.w, t % s.w)] = att.at(n * heads + c / d, t, c % d);
            }
        }
    }
    let merged = Tensor::new(ms, merged).unwrap();
    match &a.out {
        OutputProjection::Fused(t) => tconv(t, &merged, counter),
        OutputProjection::Unfused { proj, up } => {
            let p = conv(proj, &merged, counter);
            tconv(up, &p, counter)
        }
    }
}

/// MLP body without the residual.
pub fn mlp(m: &Mlp, x: &Tensor, counter: &mut Counter) -> Tensor {
    let mut h = conv(&m.fc1, &layer_norm(&m.norm, x), counter);
    act(&mut h, m.spec().activation);
    conv(&m.fc2, &h, counter)
}

pub fn lowformer_block(b: &LowFormerBlock, x: &Tensor, counter: &mut Counter) -> Tensor {
    let y = add(&attention(&b.attn, x, counter), x);
    add(&mlp(&b.mlp, &y, counter), &y)
}

pub fn block(b: &Block, x: &Tensor, counter: &mut Counter) -> Tensor {
    match b {
        Block::MbConv(m) => mbconv(m, x, counter),
        Block::LowFormer(l) => lowformer_block(l, x, counter),
    }
}

/// Whole network to logits `(n, classes, 1, 1)`.
pub fn model(m: &Model, x: &Tensor, counter: &mut Counter) -> Tensor {
    let mut y = conv_bn(&m.stem, x, counter);
    for stage in &m.stages {
        if let Some(d) = &stage.downsample {
            y = mbconv(d, &y, counter);
        }
        for b in &stage.blocks {
            y = block(b, &y, counter);
        }
    }
    let s = y.shape();
    let mut pooled = Vec::with_capacity(s.n * s.c);
    for n in 0..s.n {
        for c in 0..s.c {
            let mut acc = 0.0f32;
            for i in 0..s.plane() {
                acc += y.data()[(n * s.c + c) * s.plane() + i];
            }
            pooled.push(acc / s.plane() as f32);
        }
    }
    linear(&m.head, &Tensor::new(Shape::new(s.n, s.c, 1, 1), pooled).unwrap(), counter)
}
