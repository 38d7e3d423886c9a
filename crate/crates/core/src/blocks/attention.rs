use crate::blocks::layers::{join, Conv2d, ConvTranspose2d, Init, ParamMut, ParamRef, Parameters};
use crate::blocks::spec::AttentionSpec;
use crate::error::{ensure_eq, Result};
use crate::ops::{batched_matmul, softmax_row, ConvParams, TransposeParams};
use crate::tensor::{BatchMatrix, Shape, Tensor};

/// Scaled dot-product attention, `softmax(q·kᵀ/√d)·v`, per matrix in the stack.
pub fn sda(q: &BatchMatrix, k: &BatchMatrix, v: &BatchMatrix) -> Result<BatchMatrix> {
    ensure_eq("sda", "key batch", q.batch, k.batch)?;
    ensure_eq("sda", "value batch", q.batch, v.batch)?;
    ensure_eq("sda", "key dim", q.cols, k.cols)?;
    ensure_eq("sda", "value tokens", k.rows, v.rows)?;
    let scale = 1.0 / (q.cols as f32).sqrt();
    let mut scores = batched_matmul(q, &k.transpose())?;
    let cols = scores.cols;
    scores.data_mut().chunks_mut(cols).for_each(|row| {
        row.iter_mut().for_each(|s| *s *= scale);
        softmax_row(row);
    });
    batched_matmul(&scores, v)
}

#[derive(Clone, Debug)]
pub enum OutputProjection {
    /// One transposed 3x3 conv, C/2 -> C, stride n.
    Fused(ConvTranspose2d),
    /// PW C/2 -> C followed by a transposed DW conv with stride n.
    Unfused { proj: Conv2d, up: ConvTranspose2d },
}

/// Intermediate results of one attention forward.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    pub downsampled: Tensor,
    pub q: BatchMatrix,
    pub k: BatchMatrix,
    pub v: BatchMatrix,
    pub attended: BatchMatrix,
    pub output: Tensor,
}

#[derive(Clone, Debug)]
pub struct LowFormerAttention {
    spec: AttentionSpec,
    pub down: Conv2d,
    pub qkv: Conv2d,
    pub out: OutputProjection,
}

impl LowFormerAttention {
    pub fn new(spec: AttentionSpec, init: &Init, path: &str) -> Result<Self> {
        spec.validate()?;
        let c = spec.channels;
        let half = spec.compressed();
        let down = ConvParams::depthwise(c, spec.kernel, spec.downsample).with_bias(true);
        let qkv = ConvParams::pointwise(c, 3 * half).with_bias(true);
        let out = if spec.fuse_output {
            OutputProjection::Fused(ConvTranspose2d::new(
                TransposeParams::upsample(half, c, spec.kernel, spec.downsample).with_bias(true),
                init,
                &join(path, "out"),
            )?)
        } else {
            OutputProjection::Unfused {
                proj: Conv2d::new(ConvParams::pointwise(half, c).with_bias(true), init, &join(path, "proj"))?,
                up: ConvTranspose2d::new(
                    TransposeParams::depthwise_upsample(c, spec.kernel, spec.downsample).with_bias(true),
                    init,
                    &join(path, "up"),
                )?,
            }
        };
        Ok(LowFormerAttention {
            spec,
            down: Conv2d::new(down, init, &join(path, "down"))?,
            qkv: Conv2d::new(qkv, init, &join(path, "qkv"))?,
            out,
        })
    }

    pub fn spec(&self) -> &AttentionSpec {
        &self.spec
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(x)?.output)
    }

    pub fn forward_traced(&self, x: &Tensor) -> Result<AttentionTrace> {
        let s = x.shape();
        self.spec.check_input(s.c, s.h, s.w)?;
        let downsampled = self.down.forward(x)?;
        let qkv = self.qkv.forward(&downsampled)?;
        let (q, k, v) = split_heads(&qkv, self.spec.heads, self.spec.compressed());
        let attended = sda(&q, &k, &v)?;
        let ds = downsampled.shape();
        let merged = merge_heads(&attended, ds.n, self.spec.heads, ds.h, ds.w);
        let output = match &self.out {
            OutputProjection::Fused(t) => t.forward(&merged)?,
            OutputProjection::Unfused { proj, up } => up.forward(&proj.forward(&merged)?)?,
        };
        Ok(AttentionTrace {
            downsampled,
            q,
            k,
            v,
            attended,
            output,
        })
    }
}

/// `(n, 3·C', h, w)` -> q, k, v each `(n·heads, h·w, C'/heads)`; channel
/// block `[0, C')` is Q, then K, then V; tokens are row-major pixels.
pub fn split_heads(qkv: &Tensor, heads: usize, compressed: usize) -> (BatchMatrix, BatchMatrix, BatchMatrix) {
    let s = qkv.shape();
    let d = compressed / heads;
    let tokens = s.plane();
    let part = |offset: usize| {
        BatchMatrix::from_fn(s.n * heads, tokens, d, |b, t, j| {
            let (n, h) = (b / heads, b % heads);
            qkv.plane(n, offset + h * d + j)[t]
        })
    };
    (part(0), part(compressed), part(2 * compressed))
}

/// Inverse of [`split_heads`] for one of the three parts.
pub fn merge_heads(m: &BatchMatrix, n: usize, heads: usize, h: usize, w: usize) -> Tensor {
    let d = m.cols;
    Tensor::from_fn(Shape::new(n, heads * d, h, w), |b, c, y, x| m.at(b * heads + c / d, y * w + x, c % d))
}

impl Parameters for LowFormerAttention {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        self.down.params(&join(prefix, "down"), out);
        self.qkv.params(&join(prefix, "qkv"), out);
        match &self.out {
            OutputProjection::Fused(t) => t.params(&join(prefix, "out"), out),
            OutputProjection::Unfused { proj, up } => {
                proj.params(&join(prefix, "proj"), out);
                up.params(&join(prefix, "up"), out);
            }
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        self.down.params_mut(&join(prefix, "down"), out);
        self.qkv.params_mut(&join(prefix, "qkv"), out);
        match &mut self.out {
            OutputProjection::Fused(t) => t.params_mut(&join(prefix, "out"), out),
            OutputProjection::Unfused { proj, up } => {
                proj.params_mut(&join(prefix, "proj"), out);
                up.params_mut(&join(prefix, "up"), out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_returns_values() {
        let q = BatchMatrix::from_fn(3, 1, 4, |b, _, c| (b * 4 + c) as f32);
        let k = BatchMatrix::from_fn(3, 1, 4, |b, _, c| -((b + c) as f32));
        let v = BatchMatrix::from_fn(3, 1, 4, |b, _, c| (b as f32 + 1.0) * (c as f32 - 1.5));
        assert!(sda(&q, &k, &v).unwrap().bit_eq(&v));
    }

    #[test]
    fn one_hot_queries_select_their_value_row() {
        let n = 4;
        let q = BatchMatrix::from_fn(1, n, n, |_, r, c| if r == c { 40.0 } else { 0.0 });
        let v = BatchMatrix::from_fn(1, n, 3, |_, r, c| (r * 3 + c) as f32);
        let out = sda(&q, &q, &v).unwrap();
        assert!(out.max_abs_diff(&v) < 1e-3, "{:?}", out.data());
    }

    #[test]
    fn sda_dim_mismatch() {
        let q = BatchMatrix::zeros(1, 2, 4);
        let k = BatchMatrix::zeros(1, 2, 3);
        assert!(sda(&q, &k, &q).is_err());
    }

    #[test]
    fn downsampled_token_count() {
        let spec = AttentionSpec::with_head_dim(128, 16, 2).unwrap();
        let a = LowFormerAttention::new(spec, &Init::new(3), "a").unwrap();
        let t = a.forward_traced(&Tensor::zeros(Shape::new(1, 128, 14, 14))).unwrap();
        assert_eq!((t.q.batch, t.q.rows, t.q.cols), (4, 49, 16));
        assert_eq!(t.output.shape(), Shape::new(1, 128, 14, 14));
        assert!(a.forward(&Tensor::zeros(Shape::new(1, 128, 7, 7))).is_err());
    }

    #[test]
    fn unit_input_single_head_gives_v() {
        let spec = AttentionSpec::new(8, 1, 1).unwrap();
        let a = LowFormerAttention::new(spec, &Init::new(9), "a").unwrap();
        let x = Tensor::from_fn(Shape::new(1, 8, 1, 1), |_, c, _, _| c as f32 - 3.0);
        let t = a.forward_traced(&x).unwrap();
        assert!(t.attended.bit_eq(&t.v));
    }

    #[test]
    fn split_merge_round_trip() {
        let x = Tensor::from_fn(Shape::new(2, 12, 3, 2), |n, c, h, w| (n * 1000 + c * 10 + h * 2 + w) as f32);
        let (q, k, v) = split_heads(&x, 2, 4);
        let back: Vec<Tensor> = [q, k, v].iter().map(|m| merge_heads(m, 2, 2, 3, 2)).collect();
        for (i, part) in back.iter().enumerate() {
            for n in 0..2 {
                for c in 0..4 {
                    assert_eq!(part.plane(n, c), x.plane(n, i * 4 + c));
                }
            }
        }
    }
}
