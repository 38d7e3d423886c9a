//! Direct grouped convolutions (forward and transposed).
//!
//! Each output element accumulates, in 32-bit floats, over
//! `input channel -> kernel row -> kernel col`, starting from zero; the bias
//! is added last. The kernels walk whole output planes per tap so the inner
//! loops vectorize, but the per-element order is exactly the naive one.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_eq, Error, Result};
use crate::par::for_each_chunk;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvParams {
    /// Square kernel, `k/2` padding, no bias.
    pub fn square(in_ch: usize, out_ch: usize, k: usize, stride: usize) -> Self {
        ConvParams {
            in_ch,
            out_ch,
            kernel: (k, k),
            stride: (stride, stride),
            padding: (k / 2, k / 2),
            groups: 1,
            has_bias: false,
        }
    }

    pub fn pointwise(in_ch: usize, out_ch: usize) -> Self {
        Self::square(in_ch, out_ch, 1, 1)
    }

    pub fn depthwise(ch: usize, k: usize, stride: usize) -> Self {
        ConvParams {
            groups: ch,
            ..Self::square(ch, ch, k, stride)
        }
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_ch && self.out_ch == self.in_ch
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.groups == 1
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        if self.in_ch == 0 || self.out_ch == 0 || self.groups == 0 || kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(Error::InvalidParams(format!("conv params must be non-zero: {self:?}")));
        }
        if self.in_ch % self.groups != 0 || self.out_ch % self.groups != 0 {
            return Err(Error::InvalidParams(format!(
                "channels {}->{} not divisible by groups {}",
                self.in_ch, self.out_ch, self.groups
            )));
        }
        Ok(())
    }

    /// `[out_ch, in_ch/groups, kh, kw]`
    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_ch, self.in_ch / self.groups, self.kernel.0, self.kernel.1)
    }

    pub fn fan_in(&self) -> usize {
        self.in_ch / self.groups * self.kernel.0 * self.kernel.1
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = conv_out_len(h, self.kernel.0, self.stride.0, self.padding.0).ok_or(Error::EmptyOutput {
            op: "conv2d",
            dim: "height",
        })?;
        let ow = conv_out_len(w, self.kernel.1, self.stride.1, self.padding.1).ok_or(Error::EmptyOutput {
            op: "conv2d",
            dim: "width",
        })?;
        Ok((oh, ow))
    }
}

fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if padded < k {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

/// Output positions `o` in `[lo, hi)` whose input index `o*stride + tap - pad`
/// falls inside `[0, in_len)`.
#[inline]
fn valid_out_range(out_len: usize, in_len: usize, tap: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if pad > tap { (pad - tap).div_ceil(stride) } else { 0 };
    let hi = if in_len + pad > tap {
        ((in_len + pad - tap - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn check_bias(op: &'static str, has_bias: bool, bias: Option<&[f32]>, out_ch: usize) -> Result<()> {
    match (has_bias, bias) {
        (true, Some(b)) => ensure_eq(op, "bias length", out_ch, b.len()),
        (false, None) => Ok(()),
        (true, None) => Err(Error::InvalidParams(format!("{op}: params declare a bias but none was given"))),
        (false, Some(_)) => Err(Error::InvalidParams(format!("{op}: bias given but params declare none"))),
    }
}

/// Shape facts shared by the two conv2d paths.
struct Geometry {
    in_shape: Shape,
    oh: usize,
    ow: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
    in_per_group: usize,
    out_per_group: usize,
}

impl Geometry {
    /// Reduction length per output element.
    fn depth(&self) -> usize {
        self.in_per_group * self.kernel.0 * self.kernel.1
    }

    fn groups(&self) -> usize {
        self.in_shape.c / self.in_per_group
    }
}

/// Below this reduction depth the packed path costs more than it saves.
const PACKED_MIN_DEPTH: usize = 8;
/// Register tile: MR output channels by NR output pixels.
const MR: usize = 4;
const NR: usize = 16;
/// Output pixels packed per pass.
const PIXEL_BLOCK: usize = 128;
/// Output channels per parallel work item.
const CHANNEL_BLOCK: usize = 16;

/// One output plane per chunk; each tap is an axpy over its valid rows.
fn conv_direct(xd: &[f32], wd: &[f32], g: &Geometry, out: &mut [f32]) {
    let out_ch = g.out_per_group * g.groups();
    for_each_chunk(out, g.oh * g.ow, |idx, acc| {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2, checked just above.
                unsafe { direct_plane_avx2(xd, wd, g, idx / out_ch, idx % out_ch, acc) };
                return;
            }
        }
        direct_plane(xd, wd, g, idx / out_ch, idx % out_ch, acc)
    });
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn direct_plane_avx2(xd: &[f32], wd: &[f32], g: &Geometry, n: usize, o: usize, acc: &mut [f32]) {
    direct_plane(xd, wd, g, n, o, acc)
}

#[inline(always)]
fn direct_plane(xd: &[f32], wd: &[f32], g: &Geometry, n: usize, o: usize, acc: &mut [f32]) {
    let xs = g.in_shape;
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.padding;
    let (oh, ow) = (g.oh, g.ow);
    let in_plane = xs.plane();
    let grp = o / g.out_per_group;
    for cl in 0..g.in_per_group {
        let ci = grp * g.in_per_group + cl;
        let xplane = &xd[(n * xs.c + ci) * in_plane..][..in_plane];
        let wbase = (o * g.in_per_group + cl) * kh * kw;
        for ky in 0..kh {
            let (y0, y1) = valid_out_range(oh, xs.h, ky, ph, sh);
            for kx in 0..kw {
                let wv = wd[wbase + ky * kw + kx];
                let (x0, x1) = valid_out_range(ow, xs.w, kx, pw, sw);
                if x0 >= x1 {
                    continue;
                }
                for oy in y0..y1 {
                    let iy = oy * sh + ky - ph;
                    let xrow = &xplane[iy * xs.w..(iy + 1) * xs.w];
                    let arow = &mut acc[oy * ow + x0..oy * ow + x1];
                    let ix0 = x0 * sw + kx - pw;
                    if sw == 1 {
                        for (a, xv) in arow.iter_mut().zip(&xrow[ix0..ix0 + (x1 - x0)]) {
                            *a += xv * wv;
                        }
                    } else {
                        for (a, xv) in arow.iter_mut().zip(xrow[ix0..].iter().step_by(sw)) {
                            *a += xv * wv;
                        }
                    }
                }
            }
        }
    }
}

/// Input patches packed into `[panel][k][NR]`, `k = (ci, ky, kx)` ascending;
/// out-of-bounds taps and pixels past `npix` are zero.
fn pack_patches(xd: &[f32], g: &Geometry, n: usize, grp: usize, pix0: usize, npix: usize, buf: &mut [f32]) {
    let xs = g.in_shape;
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.padding;
    let depth = g.depth();
    let in_plane = xs.plane();
    for (panel, dst) in buf.chunks_exact_mut(depth * NR).take(npix.div_ceil(NR)).enumerate() {
        dst.fill(0.0);
        for j in 0..NR.min(npix - panel * NR) {
            let pix = pix0 + panel * NR + j;
            let (oy, ox) = (pix / g.ow, pix % g.ow);
            for cl in 0..g.in_per_group {
                let ci = grp * g.in_per_group + cl;
                let xplane = &xd[(n * xs.c + ci) * in_plane..][..in_plane];
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - ph as isize;
                    if iy < 0 || iy >= xs.h as isize {
                        continue;
                    }
                    let row = &xplane[iy as usize * xs.w..][..xs.w];
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pw as isize;
                        if ix >= 0 && ix < xs.w as isize {
                            dst[((cl * kh + ky) * kw + kx) * NR + j] = row[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// `R x NR` tile of `a[k][R] · b[k][NR]`, each element summed in `k` order from zero.
#[inline(always)]
fn micro_tile<const R: usize>(a: &[f32], b: &[f32]) -> [[f32; NR]; R] {
    let mut acc = [[0.0f32; NR]; R];
    for (av, bv) in a.chunks_exact(R).zip(b.chunks_exact(NR)) {
        let av: &[f32; R] = av.try_into().unwrap();
        let bv: &[f32; NR] = bv.try_into().unwrap();
        for r in 0..R {
            for j in 0..NR {
                acc[r][j] += av[r] * bv[j];
            }
        }
    }
    acc
}

/// All channel tiles of one packed pixel block into `chunk[channel][pixel]`.
#[inline(always)]
fn block_tiles(chunk: &mut [f32], buf: &[f32], wpack: &[f32], depth: usize, panels: usize, full: usize, opg: usize) {
    let tail = full * MR * depth;
    for t0 in (0..full).step_by(CHANNEL_BLOCK / MR) {
        for panel in 0..panels {
            let b = &buf[panel * depth * NR..][..depth * NR];
            for t in t0..full.min(t0 + CHANNEL_BLOCK / MR) {
                let tile = micro_tile::<MR>(&wpack[t * depth * MR..][..depth * MR], b);
                for (r, row) in tile.iter().enumerate() {
                    chunk[(t * MR + r) * PIXEL_BLOCK + panel * NR..][..NR].copy_from_slice(row);
                }
            }
        }
    }
    for r in 0..opg - full * MR {
        let w = &wpack[tail + r * depth..][..depth];
        for panel in 0..panels {
            let tile = micro_tile::<1>(w, &buf[panel * depth * NR..][..depth * NR]);
            chunk[(full * MR + r) * PIXEL_BLOCK + panel * NR..][..NR].copy_from_slice(&tile[0]);
        }
    }
}

/// Same code compiled for AVX2. Multiplies and adds stay separate (no FMA),
/// so results are identical to the baseline build.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn block_tiles_avx2(chunk: &mut [f32], buf: &[f32], wpack: &[f32], depth: usize, panels: usize, full: usize, opg: usize) {
    block_tiles(chunk, buf, wpack, depth, panels, full, opg)
}

fn block_kernel(chunk: &mut [f32], buf: &[f32], wpack: &[f32], depth: usize, panels: usize, full: usize, opg: usize) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { block_tiles_avx2(chunk, buf, wpack, depth, panels, full, opg) };
            return;
        }
    }
    block_tiles(chunk, buf, wpack, depth, panels, full, opg)
}

/// Weights as `[tile][k][MR]` for full tiles, then `[k]` per tail channel.
fn pack_weights(wd: &[f32], o0: usize, nch: usize, depth: usize) -> Vec<f32> {
    let full = nch / MR;
    let mut out = vec![0.0f32; nch * depth];
    for t in 0..full {
        for k in 0..depth {
            for r in 0..MR {
                out[(t * depth + k) * MR + r] = wd[(o0 + t * MR + r) * depth + k];
            }
        }
    }
    let tail = full * MR * depth;
    for r in 0..nch - full * MR {
        let o = o0 + full * MR + r;
        out[tail + r * depth..][..depth].copy_from_slice(&wd[o * depth..][..depth]);
    }
    out
}

/// Packed-panel GEMM. Work items are pixel blocks of one (image, group);
/// each packs its patches once and writes a `[channel][pixel]` staging
/// block that is copied into the NCHW planes afterwards. Per element the
/// reduction order matches [`conv_direct`] (zero taps add exact zeros to an
/// accumulator that is never negative zero).
fn conv_packed(xd: &[f32], wd: &[f32], g: &Geometry, out: &mut [f32]) {
    let plane = g.oh * g.ow;
    let depth = g.depth();
    let groups = g.groups();
    let opg = g.out_per_group;
    let full = opg / MR;
    let blocks = plane.div_ceil(PIXEL_BLOCK);
    let wpacks: Vec<Vec<f32>> = (0..groups).map(|grp| pack_weights(wd, grp * opg, opg, depth)).collect();
    let mut stage = vec![0.0f32; g.in_shape.n * groups * blocks * opg * PIXEL_BLOCK];
    for_each_chunk(&mut stage, opg * PIXEL_BLOCK, |idx, chunk| {
        let (ng, blk) = (idx / blocks, idx % blocks);
        let (n, grp) = (ng / groups, ng % groups);
        let wpack = &wpacks[grp];
        let pix0 = blk * PIXEL_BLOCK;
        let npix = PIXEL_BLOCK.min(plane - pix0);
        let panels = npix.div_ceil(NR);
        let mut buf = vec![0.0f32; depth * NR * panels];
        pack_patches(xd, g, n, grp, pix0, npix, &mut buf);
        block_kernel(chunk, &buf, wpack, depth, panels, full, opg);
    });
    for_each_chunk(out, plane, |idx, dst| {
        let (n, o) = (idx / (groups * opg), idx % (groups * opg));
        let (grp, ol) = (o / opg, o % opg);
        for blk in 0..blocks {
            let pix0 = blk * PIXEL_BLOCK;
            let npix = PIXEL_BLOCK.min(plane - pix0);
            let src = &stage[(((n * groups + grp) * blocks + blk) * opg + ol) * PIXEL_BLOCK..][..npix];
            dst[pix0..pix0 + npix].copy_from_slice(src);
        }
    });
}

/// Grouped 2-D convolution with zero padding.
///
/// `weight` is laid out `[out_ch, in_ch/groups, kh, kw]` in a [`Tensor`].
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&[f32]>, p: &ConvParams) -> Result<Tensor> {
    p.validate()?;
    let xs = x.shape();
    ensure_eq("conv2d", "input channels", p.in_ch, xs.c)?;
    let ws = weight.shape();
    let expect = p.weight_shape();
    ensure_eq("conv2d", "weight out channels", expect.n, ws.n)?;
    ensure_eq("conv2d", "weight in channels per group", expect.c, ws.c)?;
    ensure_eq("conv2d", "kernel height", expect.h, ws.h)?;
    ensure_eq("conv2d", "kernel width", expect.w, ws.w)?;
    check_bias("conv2d", p.has_bias, bias, p.out_ch)?;
    let (oh, ow) = p.output_hw(xs.h, xs.w)?;
    let out_shape = Shape::new(xs.n, p.out_ch, oh, ow);
    let mut out = vec![0.0f32; out_shape.numel()];
    let geom = Geometry {
        in_shape: xs,
        oh,
        ow,
        kernel: p.kernel,
        stride: p.stride,
        padding: p.padding,
        in_per_group: p.in_ch / p.groups,
        out_per_group: p.out_ch / p.groups,
    };
    if geom.depth() >= PACKED_MIN_DEPTH && geom.out_per_group > 1 {
        conv_packed(x.data(), weight.data(), &geom, &mut out);
    } else {
        conv_direct(x.data(), weight.data(), &geom, &mut out);
    }
    if let Some(b) = bias {
        let plane = oh * ow;
        for (i, o) in out.chunks_mut(plane).enumerate() {
            let bv = b[i % p.out_ch];
            o.iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok(Tensor::from_raw(out_shape, out))
}

/// Parameters of a grouped transposed convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransposeParams {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub output_padding: (usize, usize),
    pub groups: usize,
    pub has_bias: bool,
}

impl TransposeParams {
    /// Square kernel, padding `k/2`, output padding `stride-1`: maps `h` to `stride*h`.
    pub fn upsample(in_ch: usize, out_ch: usize, k: usize, stride: usize) -> Self {
        TransposeParams {
            in_ch,
            out_ch,
            kernel: (k, k),
            stride: (stride, stride),
            padding: (k / 2, k / 2),
            output_padding: (stride - 1, stride - 1),
            groups: 1,
            has_bias: false,
        }
    }

    pub fn depthwise_upsample(ch: usize, k: usize, stride: usize) -> Self {
        TransposeParams {
            groups: ch,
            ..Self::upsample(ch, ch, k, stride)
        }
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_ch && self.out_ch == self.in_ch
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        if self.in_ch == 0 || self.out_ch == 0 || self.groups == 0 || kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(Error::InvalidParams(format!("transposed conv params must be non-zero: {self:?}")));
        }
        if self.in_ch % self.groups != 0 || self.out_ch % self.groups != 0 {
            return Err(Error::InvalidParams(format!(
                "channels {}->{} not divisible by groups {}",
                self.in_ch, self.out_ch, self.groups
            )));
        }
        if self.output_padding.0 >= sh || self.output_padding.1 >= sw {
            return Err(Error::InvalidParams("output padding must be smaller than stride".into()));
        }
        Ok(())
    }

    /// `[in_ch, out_ch/groups, kh, kw]`
    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.in_ch, self.out_ch / self.groups, self.kernel.0, self.kernel.1)
    }

    /// Fan-in seen by one output element of the equivalent forward conv.
    pub fn fan_in(&self) -> usize {
        self.in_ch / self.groups * self.kernel.0 * self.kernel.1
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let f = |len: usize, k: usize, s: usize, p: usize, op: usize, dim| {
            let full = (len - 1) * s + k + op;
            if full <= 2 * p {
                Err(Error::EmptyOutput {
                    op: "conv_transpose2d",
                    dim,
                })
            } else {
                Ok(full - 2 * p)
            }
        };
        Ok((
            f(h, self.kernel.0, self.stride.0, self.padding.0, self.output_padding.0, "height")?,
            f(w, self.kernel.1, self.stride.1, self.padding.1, self.output_padding.1, "width")?,
        ))
    }
}

/// Grouped transposed convolution. `weight` is `[in_ch, out_ch/groups, kh, kw]`.
///
/// Input pixel `(iy, ix)` and tap `(ky, kx)` contribute to output
/// `(iy*sh + ky - ph, ix*sw + kx - pw)`; per output element the contributions
/// are summed over `input channel -> ky -> kx`.
pub fn conv_transpose2d(x: &Tensor, weight: &Tensor, bias: Option<&[f32]>, p: &TransposeParams) -> Result<Tensor> {
    p.validate()?;
    let xs = x.shape();
    ensure_eq("conv_transpose2d", "input channels", p.in_ch, xs.c)?;
    let ws = weight.shape();
    let expect = p.weight_shape();
    ensure_eq("conv_transpose2d", "weight in channels", expect.n, ws.n)?;
    ensure_eq("conv_transpose2d", "weight out channels per group", expect.c, ws.c)?;
    ensure_eq("conv_transpose2d", "kernel height", expect.h, ws.h)?;
    ensure_eq("conv_transpose2d", "kernel width", expect.w, ws.w)?;
    check_bias("conv_transpose2d", p.has_bias, bias, p.out_ch)?;
    let (oh, ow) = p.output_hw(xs.h, xs.w)?;
    let out_shape = Shape::new(xs.n, p.out_ch, oh, ow);
    let mut out = vec![0.0f32; out_shape.numel()];
    let (kh, kw) = p.kernel;
    let (sh, sw) = p.stride;
    let (ph, pw) = p.padding;
    let in_per_group = p.in_ch / p.groups;
    let out_per_group = p.out_ch / p.groups;
    let xd = x.data();
    let wd = weight.data();
    let in_plane = xs.plane();

    for_each_chunk(&mut out, oh * ow, |idx, acc| {
        let n = idx / p.out_ch;
        let o = idx % p.out_ch;
        let g = o / out_per_group;
        let ol = o % out_per_group;
        for cl in 0..in_per_group {
            let ci = g * in_per_group + cl;
            let xplane = &xd[(n * xs.c + ci) * in_plane..][..in_plane];
            let wbase = (ci * out_per_group + ol) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wd[wbase + ky * kw + kx];
                    for iy in 0..xs.h {
                        let oy = iy * sh + ky;
                        if oy < ph || oy - ph >= oh {
                            continue;
                        }
                        let oy = oy - ph;
                        let xrow = &xplane[iy * xs.w..(iy + 1) * xs.w];
                        let arow = &mut acc[oy * ow..(oy + 1) * ow];
                        for (ix, xv) in xrow.iter().enumerate() {
                            let ox = ix * sw + kx;
                            if ox < pw {
                                continue;
                            }
                            let ox = ox - pw;
                            if ox >= ow {
                                break;
                            }
                            arow[ox] += xv * wv;
                        }
                    }
                }
            }
        }
        if let Some(b) = bias {
            let bv = b[o];
            acc.iter_mut().for_each(|a| *a += bv);
        }
    });
    Ok(Tensor::from_raw(out_shape, out))
}

/// Transposed depthwise convolution (the upsampling half of the attention
/// wrapper). Rejects params that are not depthwise.
pub fn conv_transpose2d_dw(x: &Tensor, weight: &Tensor, bias: Option<&[f32]>, p: &TransposeParams) -> Result<Tensor> {
    if !p.is_depthwise() {
        return Err(Error::InvalidParams(format!(
            "conv_transpose2d_dw needs groups == in == out, got {}->{} groups {}",
            p.in_ch, p.out_ch, p.groups
        )));
    }
    conv_transpose2d(x, weight, bias, p)
}
