//! Fully convolutional patch discriminator producing a 2-D logit map.

use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{instance_norm, leaky_relu, Conv2d, ConvSpec};
use super::params::{Builder, Init, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchDiscriminatorConfig {
    pub in_channels: usize,
    pub n_layers: usize,
    pub base_width: usize,
    /// Zero padding of every 4×4 conv (1 for the usual layout, 0 for valid
    /// convolutions).
    #[serde(default = "default_padding")]
    pub padding: usize,
}

fn default_padding() -> usize {
    1
}

impl PatchDiscriminatorConfig {
    pub fn new(in_channels: usize) -> Self {
        PatchDiscriminatorConfig {
            in_channels,
            n_layers: 3,
            base_width: 64,
            padding: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels < 1 || self.n_layers < 1 || self.base_width < 1 {
            return Err(Error::Config(format!(
                "patch discriminator needs in_channels, n_layers, base_width >= 1, got {:?}",
                self
            )));
        }
        Ok(())
    }

    fn specs(&self) -> Vec<ConvSpec> {
        let w = self.base_width;
        let p = self.padding;
        let mut specs = vec![ConvSpec::new(self.in_channels, w, 4).stride(2).padding(p)];
        // convs followed by instance norm carry no bias
        let mut prev = 1;
        for n in 1..self.n_layers {
            let mult = (1 << n).min(8);
            specs.push(ConvSpec::new(w * prev, w * mult, 4).stride(2).padding(p).no_bias());
            prev = mult;
        }
        let mult = (1 << self.n_layers).min(8);
        specs.push(ConvSpec::new(w * prev, w * mult, 4).padding(p).no_bias());
        specs.push(ConvSpec::new(w * mult, 1, 4).padding(p));
        specs
    }

    /// Score-map size for an input of `h`×`w`, or `None` if the input is
    /// smaller than the conv stack admits.
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        self.specs()
            .iter()
            .try_fold((h, w), |(h, w), s| Some((s.out_len(h)?, s.out_len(w)?)))
    }

    /// Receptive field of one output score, in input pixels.
    pub fn receptive_field(&self) -> usize {
        self.specs()
            .iter()
            .rev()
            .fold(1, |rf, s| (rf - 1) * s.stride + s.kernel)
    }
}

#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    cfg: PatchDiscriminatorConfig,
    convs: Vec<Conv2d>,
}

impl PatchDiscriminator {
    pub fn new(cfg: PatchDiscriminatorConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder::new(store, rng);
        let convs = cfg
            .specs()
            .into_iter()
            .enumerate()
            .map(|(i, s)| Conv2d::new(&mut b.push(&format!("conv{i}")), s, Init::Gaussian(0.02)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PatchDiscriminator { cfg, convs })
    }

    pub fn config(&self) -> &PatchDiscriminatorConfig {
        &self.cfg
    }

    /// 1×K×H×W → 1×1×h×w raw logits.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, k, h, w) = x.dims4()?;
        if k != self.cfg.in_channels {
            return Err(Error::shape(
                "patch discriminator input channels",
                self.cfg.in_channels,
                k,
            ));
        }
        if self.cfg.output_size(h, w).is_none() {
            return Err(Error::shape(
                "patch discriminator input",
                format!(
                    "an input large enough for a non-empty score map (receptive field {}px, padding {})",
                    self.cfg.receptive_field(),
                    self.cfg.padding
                ),
                format!("{h}x{w}"),
            ));
        }
        let last = self.convs.len() - 1;
        let mut y = x.clone();
        for (i, c) in self.convs.iter().enumerate() {
            y = c.forward(&y)?;
            if i == last {
                break;
            }
            if i > 0 {
                y = instance_norm(&y)?;
            }
            y = leaky_relu(&y, 0.2)?;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::params::seeded_rng;
    use candle_core::{DType, Device};

    /// Independent layer arithmetic: floor((n + 2p - k) / s) + 1 per layer.
    fn oracle(mut n: i64, p: i64) -> i64 {
        for s in [2, 2, 2, 1, 1] {
            n = (n + 2 * p - 4).div_euclid(s) + 1;
        }
        n
    }

    #[test]
    fn layer_arithmetic_matches_oracle() {
        let cfg = PatchDiscriminatorConfig::new(3);
        assert_eq!(oracle(256, 1), 30);
        assert_eq!(cfg.output_size(256, 256), Some((30, 30)));
        let valid = PatchDiscriminatorConfig { padding: 0, ..cfg };
        assert_eq!(oracle(70, 0), 1);
        assert_eq!(valid.output_size(70, 70), Some((1, 1)));
        assert_eq!(valid.receptive_field(), 70);
        assert_eq!(valid.output_size(69, 70), None);
        for n in 32..300 {
            assert_eq!(cfg.output_size(n, n).map(|s| s.0 as i64), Some(oracle(n as i64, 1)));
        }
    }

    #[test]
    fn forward_shapes_and_errors() {
        let cfg = PatchDiscriminatorConfig {
            in_channels: 11,
            n_layers: 2,
            base_width: 4,
            padding: 1,
        };
        let mut store = ParamStore::new(DType::F32, &Device::Cpu);
        let d = PatchDiscriminator::new(cfg, &mut store, &mut seeded_rng(0)).unwrap();
        let x = Tensor::randn(0f32, 1., (1, 11, 32, 48), &Device::Cpu).unwrap();
        let (h, w) = cfg.output_size(32, 48).unwrap();
        assert_eq!(d.forward(&x).unwrap().dims(), &[1, 1, h, w]);

        let bad = Tensor::zeros((1, 10, 32, 32), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(d.forward(&bad), Err(Error::Shape { .. })));

        let valid = PatchDiscriminatorConfig { padding: 0, ..cfg };
        let mut store = ParamStore::new(DType::F32, &Device::Cpu);
        let d = PatchDiscriminator::new(valid, &mut store, &mut seeded_rng(0)).unwrap();
        let small = Tensor::zeros((1, 11, 8, 8), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(d.forward(&small), Err(Error::Shape { .. })));
    }

    #[test]
    fn full_size_default_stack() {
        let mut store = ParamStore::new(DType::F32, &Device::Cpu);
        let d = PatchDiscriminator::new(PatchDiscriminatorConfig::new(3), &mut store, &mut seeded_rng(0))
            .unwrap();
        let x = Tensor::zeros((1, 3, 256, 256), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(d.forward(&x).unwrap().dims(), &[1, 1, 30, 30]);
    }
}
