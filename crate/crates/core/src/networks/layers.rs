//! Convolution building blocks shared by all network families.

use candle_core::{DType, Device, Tensor, D};

use super::im2col;
use super::params::{Builder, Init};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zeros,
    Reflect,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
    dilation: usize,
    pad_mode: PadMode,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub pad_mode: PadMode,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(in_c: usize, out_c: usize, kernel: usize) -> Self {
        ConvSpec {
            in_c,
            out_c,
            kernel,
            stride: 1,
            padding: 0,
            dilation: 1,
            pad_mode: PadMode::Zeros,
            bias: true,
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn padding(mut self, p: usize) -> Self {
        self.padding = p;
        self
    }

    pub fn dilation(mut self, d: usize) -> Self {
        self.dilation = d;
        self
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn reflect(mut self) -> Self {
        self.pad_mode = PadMode::Reflect;
        self
    }

    /// Output length along one axis, or `None` when the input is too small.
    pub fn out_len(&self, n: usize) -> Option<usize> {
        let eff = self.dilation * (self.kernel - 1) + 1;
        let padded = n + 2 * self.padding;
        (padded >= eff).then(|| (padded - eff) / self.stride + 1)
    }
}

impl Conv2d {
    pub fn new(b: &mut Builder, spec: ConvSpec, init: Init) -> Result<Self> {
        let fan_in = spec.in_c * spec.kernel * spec.kernel;
        let weight = b.tensor(
            "weight",
            &[spec.out_c, spec.in_c, spec.kernel, spec.kernel],
            init,
            fan_in,
        )?;
        let bias = if spec.bias {
            Some(b.tensor("bias", &[spec.out_c], Init::Zeros, fan_in)?)
        } else {
            None
        };
        Ok(Conv2d {
            weight,
            bias,
            stride: spec.stride,
            padding: spec.padding,
            dilation: spec.dilation,
            pad_mode: spec.pad_mode,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (x, pad) = match self.pad_mode {
            PadMode::Reflect if self.padding > 0 => (reflect_pad(x, self.padding)?, 0),
            _ => (x.clone(), self.padding),
        };
        let y = im2col::conv2d(&x, &self.weight, pad, self.stride, self.dilation)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, b.dims()[0], 1, 1))?)?,
            None => y,
        })
    }
}

/// Stride-2 transposed convolution (kernel 3, padding 1, output padding 1)
/// that exactly doubles the spatial size. Bias-free: it always feeds an
/// instance norm.
#[derive(Debug, Clone)]
pub struct UpConv {
    weight: Tensor,
}

impl UpConv {
    pub fn new(b: &mut Builder, in_c: usize, out_c: usize, init: Init) -> Result<Self> {
        let weight = b.tensor("weight", &[in_c, out_c, 3, 3], init, in_c * 9)?;
        Ok(UpConv { weight })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        im2col::conv_transpose2d(x, &self.weight, 1, 2, 2 * h, 2 * w)
    }
}

/// Mirror padding on both spatial axes (edge pixel not repeated).
pub fn reflect_pad(x: &Tensor, p: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if p >= h || p >= w {
        return Err(Error::shape(
            "reflection padding",
            format!("spatial size > {p}"),
            format!("{h}x{w}"),
        ));
    }
    let x = x.index_select(&reflect_index(h, p, x.device())?, 2)?;
    Ok(x.index_select(&reflect_index(w, p, x.device())?, 3)?)
}

fn reflect_index(n: usize, p: usize, device: &Device) -> Result<Tensor> {
    let idx: Vec<u32> = (0..n + 2 * p)
        .map(|i| {
            let j = i as i64 - p as i64;
            let r = if j < 0 {
                -j
            } else if j >= n as i64 {
                2 * (n as i64 - 1) - j
            } else {
                j
            };
            r as u32
        })
        .collect();
    Ok(Tensor::from_vec(idx, n + 2 * p, device)?)
}

/// Per-sample, per-channel normalization over the spatial axes (no affine).
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    const EPS: f64 = 1e-5;
    let mean = x.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered
        .sqr()?
        .mean_keepdim(D::Minus1)?
        .mean_keepdim(D::Minus2)?;
    Ok(centered.broadcast_div(&(var + EPS)?.sqrt()?)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}

/// 3×3 stride-2 max pooling with implicit padding 1; inputs must be ≥ 0
/// (post-ReLU) so zero padding never wins the max.
pub fn max_pool_3x3(x: &Tensor, stride: usize) -> Result<Tensor> {
    let x = x.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?;
    Ok(x.max_pool2d_with_stride((3, 3), (stride, stride))?)
}

/// Interpolation matrix (out × in) for half-pixel-centred bilinear resizing.
pub fn bilinear_matrix(n_out: usize, n_in: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_out * n_in];
    let scale = n_in as f64 / n_out as f64;
    for i in 0..n_out {
        let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        let l = src - i0 as f64;
        m[i * n_in + i0] += 1.0 - l;
        m[i * n_in + i1] += l;
    }
    m
}

/// Differentiable bilinear resize of a 1×K×h×w tensor to 1×K×H×W, done as
/// two matrix products so gradients flow through standard ops.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (n, k, h, w) = x.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let dtype = x.dtype();
    let dev = x.device();
    let ah = matrix(bilinear_matrix(out_h, h), (out_h, h), dtype, dev)?;
    let awt = matrix(bilinear_matrix(out_w, w), (out_w, w), dtype, dev)?.t()?;
    let x = x.reshape((n * k, h, w))?;
    let rows = ah.unsqueeze(0)?.broadcast_matmul(&x)?; // (nk, H, w)
    let out = rows.broadcast_matmul(&awt.unsqueeze(0)?)?; // (nk, H, W)
    Ok(out.reshape((n, k, out_h, out_w))?)
}

fn matrix(data: Vec<f64>, shape: (usize, usize), dtype: DType, dev: &Device) -> Result<Tensor> {
    Ok(Tensor::from_vec(data, shape, dev)?.to_dtype(dtype)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::params::{seeded_rng, ParamStore};

    #[test]
    fn reflect_pad_mirrors_without_edge_repeat() {
        let x = Tensor::arange(0f32, 4., &Device::Cpu)
            .unwrap()
            .reshape((1, 1, 1, 4))
            .unwrap();
        let x = x.repeat((1, 1, 4, 1)).unwrap();
        let y = reflect_pad(&x, 2).unwrap();
        let row: Vec<f32> = y.get(0).unwrap().get(0).unwrap().get(0).unwrap().to_vec1().unwrap();
        assert_eq!(row, vec![2., 1., 0., 1., 2., 3., 2., 1.]);
    }

    #[test]
    fn bilinear_rows_sum_to_one_and_identity_at_same_size() {
        for (o, i) in [(8, 4), (5, 3), (4, 4), (3, 7)] {
            let m = bilinear_matrix(o, i);
            for r in 0..o {
                let s: f64 = m[r * i..(r + 1) * i].iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let m = bilinear_matrix(3, 3);
        assert_eq!(m, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]);
    }

    #[test]
    fn resize_preserves_constants() {
        let x = Tensor::full(0.25f32, (1, 2, 3, 5), &Device::Cpu).unwrap();
        let y = resize_bilinear(&x, 6, 10).unwrap();
        assert_eq!(y.dims(), &[1, 2, 6, 10]);
        let v = y.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert!(v.iter().all(|&a| (a - 0.25).abs() < 1e-6));
    }

    #[test]
    fn instance_norm_zero_mean_unit_var() {
        let x = Tensor::randn(3f32, 2., (1, 4, 6, 6), &Device::Cpu).unwrap();
        let y = instance_norm(&x).unwrap();
        let m = y.mean_keepdim(3).unwrap().mean_keepdim(2).unwrap();
        let m = m.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-5));
        let var = y.sqr().unwrap().mean_all().unwrap().to_scalar::<f32>().unwrap();
        assert!((var - 1.0).abs() < 1e-3);
    }

    #[test]
    fn upconv_doubles_size() {
        let mut s = ParamStore::new(DType::F32, &Device::Cpu);
        let mut rng = seeded_rng(0);
        let mut b = Builder::new(&mut s, &mut rng);
        let up = UpConv::new(&mut b.push("up"), 4, 2, Init::Gaussian(0.02)).unwrap();
        let x = Tensor::zeros((1, 4, 5, 7), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(up.forward(&x).unwrap().dims(), &[1, 2, 10, 14]);
    }

    #[test]
    fn conv_out_len_arithmetic() {
        let c = ConvSpec::new(1, 1, 4).stride(2).padding(1);
        assert_eq!(c.out_len(256), Some(128));
        let c = ConvSpec::new(1, 1, 4);
        assert_eq!(c.out_len(3), None);
        assert_eq!(c.out_len(4), Some(1));
    }
}
