//! Image transform network: ResNet-style encoder/decoder that maps a source
//! image plus its auxiliary planes to a target-styled image.

use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{instance_norm, Conv2d, ConvSpec, UpConv};
use super::params::{Builder, Init, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformNetConfig {
    pub in_channels: usize,
    pub base_width: usize,
    pub n_residual_blocks: usize,
}

impl TransformNetConfig {
    /// Default widths; 9 residual blocks from 256 px up, 6 below.
    pub fn for_input(in_channels: usize, min_side: usize) -> Self {
        TransformNetConfig {
            in_channels,
            base_width: 64,
            n_residual_blocks: if min_side >= 256 { 9 } else { 6 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels < 3 {
            return Err(Error::Config(format!(
                "transform network needs >= 3 input channels, got {}",
                self.in_channels
            )));
        }
        if self.n_residual_blocks < 1 || self.base_width < 1 {
            return Err(Error::Config(
                "transform network needs >= 1 residual block and width >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ResBlock {
    c1: Conv2d,
    c2: Conv2d,
}

impl ResBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = instance_norm(&self.c1.forward(x)?)?.relu()?;
        let h = instance_norm(&self.c2.forward(&h)?)?;
        Ok((x + h)?)
    }
}

#[derive(Debug, Clone)]
pub struct TransformNet {
    cfg: TransformNetConfig,
    stem: Conv2d,
    down: Vec<Conv2d>,
    blocks: Vec<ResBlock>,
    up: Vec<UpConv>,
    head: Conv2d,
}

impl TransformNet {
    pub fn new(cfg: TransformNetConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let init = Init::Gaussian(0.02);
        let w = cfg.base_width;
        let mut b = Builder::new(store, rng);
        let stem = Conv2d::new(
            &mut b.push("stem"),
            ConvSpec::new(cfg.in_channels, w, 7).padding(3).reflect().no_bias(),
            init,
        )?;
        let down = (0..2)
            .map(|i| {
                let spec = ConvSpec::new(w << i, w << (i + 1), 3)
                    .stride(2)
                    .padding(1)
                    .no_bias();
                Conv2d::new(&mut b.push(&format!("down{i}")), spec, init)
            })
            .collect::<Result<Vec<_>>>()?;
        let wide = w * 4;
        let blocks = (0..cfg.n_residual_blocks)
            .map(|i| {
                let mut bb = b.push(&format!("res{i}"));
                let spec = ConvSpec::new(wide, wide, 3).padding(1).reflect().no_bias();
                Ok(ResBlock {
                    c1: Conv2d::new(&mut bb.push("c1"), spec, init)?,
                    c2: Conv2d::new(&mut bb.push("c2"), spec, init)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let up = (0..2)
            .map(|i| UpConv::new(&mut b.push(&format!("up{i}")), wide >> i, wide >> (i + 1), init))
            .collect::<Result<Vec<_>>>()?;
        let head = Conv2d::new(
            &mut b.push("head"),
            ConvSpec::new(w, 3, 7).padding(3).reflect(),
            init,
        )?;
        Ok(TransformNet {
            cfg,
            stem,
            down,
            blocks,
            up,
            head,
        })
    }

    pub fn config(&self) -> &TransformNetConfig {
        &self.cfg
    }

    /// 1×K×H×W → 1×3×H×W in `[-1, 1]`. Inputs whose sides are not multiples
    /// of 4 are reflection-padded on the bottom/right and cropped back.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, k, h, w) = x.dims4()?;
        if k != self.cfg.in_channels {
            return Err(Error::shape(
                "transform network input channels",
                self.cfg.in_channels,
                k,
            ));
        }
        let (ph, pw) = ((4 - h % 4) % 4, (4 - w % 4) % 4);
        let x = pad_bottom_right(x, ph, pw)?;
        let mut h_ = instance_norm(&self.stem.forward(&x)?)?.relu()?;
        for d in &self.down {
            h_ = instance_norm(&d.forward(&h_)?)?.relu()?;
        }
        for b in &self.blocks {
            h_ = b.forward(&h_)?;
        }
        for u in &self.up {
            h_ = instance_norm(&u.forward(&h_)?)?.relu()?;
        }
        let out = self.head.forward(&h_)?.tanh()?;
        Ok(out.narrow(2, 0, h)?.narrow(3, 0, w)?)
    }
}

fn pad_bottom_right(x: &Tensor, ph: usize, pw: usize) -> Result<Tensor> {
    if ph == 0 && pw == 0 {
        return Ok(x.clone());
    }
    let (_, _, h, w) = x.dims4()?;
    let mirror = |n: usize, p: usize| -> Vec<u32> {
        (0..n + p)
            .map(|i| {
                if i < n {
                    i as u32
                } else {
                    (2 * (n as i64 - 1) - i as i64).max(0) as u32
                }
            })
            .collect()
    };
    if h < 2 || w < 2 {
        return Err(Error::shape("transform network input", "at least 2x2", format!("{h}x{w}")));
    }
    let dev = x.device();
    let x = x.index_select(&Tensor::new(mirror(h, ph), dev)?, 2)?;
    Ok(x.index_select(&Tensor::new(mirror(w, pw), dev)?, 3)?)
}
