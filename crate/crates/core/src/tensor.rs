//! Dense NCHW `f32` tensors and a small batched-matrix companion type.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_eq, Error, Result};

/// Shape of a 4-D activation: batch, channels, rows, cols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Contiguous row-major tensor, index `((n*C + c)*H + h)*W + w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        check_dims("tensor", &shape)?;
        ensure_eq("tensor", "data length", shape.numel(), data.len())?;
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        assert!(shape.numel() > 0, "tensor dims must be >= 1, got {shape}");
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.index(n, c, h, w)]
    }

    /// One `h*w` feature plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(self, shape: Shape) -> Result<Self> {
        check_dims("reshape", &shape)?;
        ensure_eq("reshape", "element count", self.data.len(), shape.numel())?;
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    /// True when both tensors have the same shape and bit-identical data.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

pub(crate) fn check_dims(op: &'static str, s: &Shape) -> Result<()> {
    if s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0 {
        return Err(Error::InvalidParams(format!("{op}: all dims must be >= 1, got {s}")));
    }
    Ok(())
}

/// A stack of `batch` row-major `rows x cols` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchMatrix {
    pub batch: usize,
    pub rows: usize,
    pub cols: usize,
    data: Vec<f32>,
}

impl BatchMatrix {
    pub fn new(batch: usize, rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if batch == 0 || rows == 0 || cols == 0 {
            return Err(Error::InvalidParams(format!(
                "batch matrix dims must be >= 1, got ({batch}, {rows}, {cols})"
            )));
        }
        ensure_eq("batch matrix", "data length", batch * rows * cols, data.len())?;
        Ok(BatchMatrix {
            batch,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(batch: usize, rows: usize, cols: usize) -> Self {
        BatchMatrix {
            batch,
            rows,
            cols,
            data: vec![0.0; batch * rows * cols],
        }
    }

    pub fn from_fn(batch: usize, rows: usize, cols: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(batch * rows * cols);
        for b in 0..batch {
            for r in 0..rows {
                for c in 0..cols {
                    data.push(f(b, r, c));
                }
            }
        }
        BatchMatrix {
            batch,
            rows,
            cols,
            data,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, b: usize, r: usize, c: usize) -> f32 {
        self.data[(b * self.rows + r) * self.cols + c]
    }

    pub fn matrix(&self, b: usize) -> &[f32] {
        let m = self.rows * self.cols;
        &self.data[b * m..(b + 1) * m]
    }

    /// Swaps the two inner dims of every matrix in the stack.
    pub fn transpose(&self) -> BatchMatrix {
        let mut out = BatchMatrix::zeros(self.batch, self.cols, self.rows);
        for b in 0..self.batch {
            let src = self.matrix(b);
            let dst = &mut out.data[b * self.rows * self.cols..(b + 1) * self.rows * self.cols];
            for r in 0..self.rows {
                for c in 0..self.cols {
                    dst[c * self.rows + r] = src[r * self.cols + c];
                }
            }
        }
        out
    }

    pub fn bit_eq(&self, other: &BatchMatrix) -> bool {
        (self.batch, self.rows, self.cols) == (other.batch, other.rows, other.cols)
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn max_abs_diff(&self, other: &BatchMatrix) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}
