//! Convolution as patch extraction plus matrix product.
//!
//! `Im2Col` and `Col2Im` are pure data movement and each other's adjoint,
//! so wrapping them as custom ops gives exact gradients while all the
//! arithmetic runs through the (much faster) matmul kernels.

use candle_core::backend::BackendStorage;
use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor};

use crate::error::{Error, Result};

/// Sliding-window geometry over an `h`×`w` image with `c` channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl Geometry {
    pub fn out_size(&self) -> Option<(usize, usize)> {
        let eff = self.dilation * (self.k - 1) + 1;
        let f = |n: usize| {
            let padded = n + 2 * self.pad;
            (padded >= eff).then(|| (padded - eff) / self.stride + 1)
        };
        Some((f(self.h)?, f(self.w)?))
    }

    fn out(&self) -> candle_core::Result<(usize, usize)> {
        self.out_size()
            .ok_or_else(|| candle_core::Error::Msg(format!("window does not fit: {self:?}")))
    }

    /// Calls `f(col_start, image_start, len)` for every run of in-bounds
    /// taps sharing a (channel, kernel offset, output row). Column entries
    /// of a run are consecutive; image entries are `stride` apart.
    #[inline]
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize)) -> candle_core::Result<()> {
        let (ho, wo) = self.out()?;
        let l = ho * wo;
        let (s, p) = (self.stride as isize, self.pad as isize);
        for ch in 0..self.c {
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = ((ch * self.k + ki) * self.k + kj) * l;
                    // valid oj: 0 <= oj*s + kj*d - p < w
                    let off = (kj * self.dilation) as isize - p;
                    let lo = if off >= 0 { 0 } else { ((-off + s - 1) / s) as usize };
                    let hi = ((self.w as isize - 1 - off).div_euclid(s) + 1).clamp(0, wo as isize) as usize;
                    if lo >= hi {
                        continue;
                    }
                    for oi in 0..ho {
                        let ii = (oi * self.stride + ki * self.dilation) as isize - p;
                        if ii < 0 || ii >= self.h as isize {
                            continue;
                        }
                        let img = (ch * self.h + ii as usize) * self.w;
                        let j0 = (lo as isize * s + off) as usize;
                        f(row + oi * wo + lo, img + j0, hi - lo);
                    }
                }
            }
        }
        Ok(())
    }
}

fn contiguous<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((a, b)) => Ok(&data[a..b]),
        None => Err(candle_core::Error::Msg("im2col expects a contiguous input".into())),
    }
}

/// (n, c, h, w) → (n, c·k·k, ho·wo)
struct Im2Col(Geometry);

/// (n, c·k·k, ho·wo) → (n, c, h, w), summing overlapping taps.
struct Col2Im(Geometry);

fn im2col<T: Copy + Default>(g: &Geometry, src: &[T], n: usize) -> candle_core::Result<Vec<T>> {
    let (ho, wo) = g.out()?;
    let (isz, csz) = (g.c * g.h * g.w, g.c * g.k * g.k * ho * wo);
    let mut out = vec![T::default(); n * csz];
    for b in 0..n {
        let (s, o) = (&src[b * isz..(b + 1) * isz], &mut out[b * csz..(b + 1) * csz]);
        let st = g.stride;
        g.for_each_run(|ci, ii, len| {
            if st == 1 {
                o[ci..ci + len].copy_from_slice(&s[ii..ii + len]);
            } else {
                for (dst, src) in o[ci..ci + len].iter_mut().zip(s[ii..].iter().step_by(st)) {
                    *dst = *src;
                }
            }
        })?;
    }
    Ok(out)
}

fn col2im<T: Copy + Default + std::ops::AddAssign>(g: &Geometry, src: &[T], n: usize) -> candle_core::Result<Vec<T>> {
    let (ho, wo) = g.out()?;
    let (isz, csz) = (g.c * g.h * g.w, g.c * g.k * g.k * ho * wo);
    let mut out = vec![T::default(); n * isz];
    for b in 0..n {
        let (s, o) = (&src[b * csz..(b + 1) * csz], &mut out[b * isz..(b + 1) * isz]);
        let st = g.stride;
        g.for_each_run(|ci, ii, len| {
            for (src, dst) in s[ci..ci + len].iter().zip(o[ii..].iter_mut().step_by(st)) {
                *dst += *src;
            }
        })?;
    }
    Ok(out)
}

impl CustomOp1 for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let (n, c, h, w) = layout.shape().dims4()?;
        if (c, h, w) != (g.c, g.h, g.w) {
            return Err(candle_core::Error::Msg(format!("im2col input {c}x{h}x{w} does not match {g:?}")));
        }
        let (ho, wo) = g.out()?;
        let shape = Shape::from((n, g.c * g.k * g.k, ho * wo));
        let out = match storage {
            CpuStorage::F32(d) => CpuStorage::F32(im2col(g, contiguous(d, layout)?, n)?),
            CpuStorage::F64(d) => CpuStorage::F64(im2col(g, contiguous(d, layout)?, n)?),
            s => return Err(candle_core::Error::UnsupportedDTypeForOp(s.dtype(), "im2col")),
        };
        Ok((out, shape))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1_no_bwd(&Col2Im(self.0))?))
    }
}

impl CustomOp1 for Col2Im {
    fn name(&self) -> &'static str {
        "col2im"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let (n, rows, l) = layout.shape().dims3()?;
        let (ho, wo) = g.out()?;
        if (rows, l) != (g.c * g.k * g.k, ho * wo) {
            return Err(candle_core::Error::Msg(format!("col2im input {rows}x{l} does not match {g:?}")));
        }
        let shape = Shape::from((n, g.c, g.h, g.w));
        let out = match storage {
            CpuStorage::F32(d) => CpuStorage::F32(col2im(g, contiguous(d, layout)?, n)?),
            CpuStorage::F64(d) => CpuStorage::F64(col2im(g, contiguous(d, layout)?, n)?),
            s => return Err(candle_core::Error::UnsupportedDTypeForOp(s.dtype(), "col2im")),
        };
        Ok((out, shape))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1_no_bwd(&Im2Col(self.0))?))
    }
}

// The ops hold only geometry; tracked application needs owned values.
impl Im2Col {
    fn apply(self, x: &Tensor) -> Result<Tensor> {
        Ok(x.contiguous()?.apply_op1(self)?)
    }
}

impl Col2Im {
    fn apply(self, x: &Tensor) -> Result<Tensor> {
        Ok(x.contiguous()?.apply_op1(self)?)
    }
}

/// Zero-padded 2-D cross-correlation of `x` (n×c×h×w) with `weight`
/// (o×c×k×k).
pub fn conv2d(x: &Tensor, weight: &Tensor, pad: usize, stride: usize, dilation: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (o, wc, k, k2) = weight.dims4()?;
    if wc != c || k != k2 {
        return Err(Error::shape("conv weight", format!("{o}x{c}x{k}x{k}"), format!("{o}x{wc}x{k}x{k2}")));
    }
    let g = Geometry {
        c,
        h,
        w,
        k,
        stride,
        pad,
        dilation,
    };
    let (ho, wo) = g
        .out_size()
        .ok_or_else(|| Error::shape("conv input", format!("at least {k} after padding"), format!("{h}x{w}")))?;
    let cols = Im2Col(g).apply(x)?;
    let wm = weight.reshape((o, c * k * k))?;
    Ok(wm.broadcast_matmul(&cols)?.reshape((n, o, ho, wo))?)
}

/// Transposed convolution with `weight` (c_in×c_out×k×k) producing an
/// `out_h`×`out_w` map: the adjoint of [`conv2d`] on that output size.
pub fn conv_transpose2d(
    x: &Tensor,
    weight: &Tensor,
    pad: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor> {
    let (n, ci, h, w) = x.dims4()?;
    let (wi, co, k, _) = weight.dims4()?;
    if wi != ci {
        return Err(Error::shape("transposed conv weight input channels", ci, wi));
    }
    let g = Geometry {
        c: co,
        h: out_h,
        w: out_w,
        k,
        stride,
        pad,
        dilation: 1,
    };
    if g.out_size() != Some((h, w)) {
        return Err(Error::shape("transposed conv input", format!("{:?}", g.out_size()), format!("{h}x{w}")));
    }
    let wm = weight.reshape((ci, co * k * k))?.t()?;
    let cols = wm.broadcast_matmul(&x.reshape((n, ci, h * w))?)?;
    Col2Im(g).apply(&cols)
}
