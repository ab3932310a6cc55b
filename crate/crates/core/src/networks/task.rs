//! Task network: shared convolutional backbone with a segmentation head and
//! a depth head, both upsampled back to input resolution.

use std::collections::HashMap;
use std::path::Path;

use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{max_pool_3x3, resize_bilinear, Conv2d, ConvSpec};
use super::params::{Builder, Init, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    /// DeepLab-v2 style VGG16: pool4/pool5 at stride 1, dilated conv5, large
    /// field-of-view head. Output stride 8.
    Vgg16,
    /// Reduced 4-block stack for desk-scale runs.
    Tiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskNetConfig {
    pub backbone: Backbone,
    pub num_classes: usize,
    pub depth_head: bool,
    pub output_stride: usize,
    /// Channel width of the TINY stack (ignored for VGG16).
    #[serde(default = "default_tiny_width")]
    pub tiny_width: usize,
}

fn default_tiny_width() -> usize {
    16
}

impl TaskNetConfig {
    pub fn tiny(num_classes: usize) -> Self {
        TaskNetConfig {
            backbone: Backbone::Tiny,
            num_classes,
            depth_head: true,
            output_stride: 2,
            tiny_width: default_tiny_width(),
        }
    }

    pub fn vgg16(num_classes: usize) -> Self {
        TaskNetConfig {
            backbone: Backbone::Vgg16,
            num_classes,
            depth_head: true,
            output_stride: 8,
            tiny_width: default_tiny_width(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "task network needs >= 2 classes, got {}",
                self.num_classes
            )));
        }
        match self.backbone {
            Backbone::Vgg16 if self.output_stride != 8 => Err(Error::Config(format!(
                "VGG16 backbone has output stride 8, got {}",
                self.output_stride
            ))),
            Backbone::Tiny if ![1, 2, 4, 8].contains(&self.output_stride) => {
                Err(Error::Config(format!(
                    "TINY backbone supports output stride 1, 2, 4 or 8, got {}",
                    self.output_stride
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Prediction maps at input resolution.
#[derive(Debug, Clone)]
pub struct TaskOutput {
    /// 1×C×H×W raw class scores.
    pub seg_logits: Tensor,
    /// 1×1×H×W normalized depth in `[0, 1]`.
    pub depth: Option<Tensor>,
}

#[derive(Debug, Clone)]
enum Stage {
    Conv(Conv2d),
    Pool(usize),
}

#[derive(Debug, Clone)]
pub struct TaskNet {
    cfg: TaskNetConfig,
    backbone: Vec<Stage>,
    neck: Vec<Conv2d>,
    seg_head: Conv2d,
    depth_head: Option<Conv2d>,
}

const VGG_BLOCKS: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];

impl TaskNet {
    pub fn new(cfg: TaskNetConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let init = Init::He;
        let mut b = Builder::new(store, rng);
        let (backbone, neck, feat) = match cfg.backbone {
            Backbone::Tiny => {
                let mut bb = b.push("backbone");
                let w = cfg.tiny_width;
                let n_down = cfg.output_stride.trailing_zeros() as usize;
                let widths = [w, 2 * w, 2 * w, 2 * w];
                let mut stages = Vec::new();
                let mut in_c = 3;
                for (i, &out_c) in widths.iter().enumerate() {
                    // block 0 keeps resolution, blocks 1..=n_down downsample,
                    // the remaining blocks dilate
                    let spec = if i == 0 {
                        ConvSpec::new(in_c, out_c, 3).padding(1)
                    } else if i <= n_down {
                        ConvSpec::new(in_c, out_c, 3).stride(2).padding(1)
                    } else {
                        ConvSpec::new(in_c, out_c, 3).padding(2).dilation(2)
                    };
                    stages.push(Stage::Conv(Conv2d::new(&mut bb.push(&format!("conv{i}")), spec, init)?));
                    in_c = out_c;
                }
                (stages, Vec::new(), in_c)
            }
            Backbone::Vgg16 => {
                let mut bb = b.push("backbone");
                let mut stages = Vec::new();
                let mut in_c = 3;
                for (bi, &(n, width)) in VGG_BLOCKS.iter().enumerate() {
                    let dilation = if bi == 4 { 2 } else { 1 };
                    for li in 0..n {
                        let spec = ConvSpec::new(in_c, width, 3).padding(dilation).dilation(dilation);
                        let name = format!("conv{}_{}", bi + 1, li + 1);
                        stages.push(Stage::Conv(Conv2d::new(&mut bb.push(&name), spec, init)?));
                        in_c = width;
                    }
                    stages.push(Stage::Pool(if bi < 3 { 2 } else { 1 }));
                }
                let mut nb = b.push("neck");
                let fc6 = Conv2d::new(
                    &mut nb.push("fc6"),
                    ConvSpec::new(512, 1024, 3).padding(12).dilation(12),
                    init,
                )?;
                let fc7 = Conv2d::new(&mut nb.push("fc7"), ConvSpec::new(1024, 1024, 1), init)?;
                (stages, vec![fc6, fc7], 1024)
            }
        };
        let seg_head = Conv2d::new(
            &mut b.push("seg_head"),
            ConvSpec::new(feat, cfg.num_classes, 1),
            Init::Gaussian(0.01),
        )?;
        let depth_head = if cfg.depth_head {
            Some(Conv2d::new(
                &mut b.push("depth_head"),
                ConvSpec::new(feat, 1, 1),
                Init::Gaussian(0.01),
            )?)
        } else {
            None
        };
        Ok(TaskNet {
            cfg,
            backbone,
            neck,
            seg_head,
            depth_head,
        })
    }

    pub fn config(&self) -> &TaskNetConfig {
        &self.cfg
    }

    /// Shared backbone features (before the heads).
    pub fn features(&self, image: &Tensor) -> Result<Tensor> {
        let (_, k, _, _) = image.dims4()?;
        if k != 3 {
            return Err(Error::shape("task network input channels", 3, k));
        }
        let mut h = image.clone();
        for stage in &self.backbone {
            h = match stage {
                Stage::Conv(c) => c.forward(&h)?.relu()?,
                Stage::Pool(s) => max_pool_3x3(&h, *s)?,
            };
        }
        for c in &self.neck {
            h = c.forward(&h)?.relu()?;
        }
        Ok(h)
    }

    pub fn forward(&self, image: &Tensor) -> Result<TaskOutput> {
        let (_, _, h, w) = image.dims4()?;
        let feats = self.features(image)?;
        let seg_logits = resize_bilinear(&self.seg_head.forward(&feats)?, h, w)?;
        let depth = match &self.depth_head {
            Some(head) => Some(candle_nn::ops::sigmoid(&resize_bilinear(
                &head.forward(&feats)?,
                h,
                w,
            )?)?),
            None => None,
        };
        Ok(TaskOutput { seg_logits, depth })
    }

    /// Loads backbone weights from a safetensors file whose keys are the
    /// backbone layer names (`conv1_1.weight`, ...). Only valid for VGG16.
    pub fn load_pretrained_backbone(&self, store: &ParamStore, path: &Path) -> Result<usize> {
        if self.cfg.backbone != Backbone::Vgg16 {
            return Err(Error::Config("pretrained backbone weights require backbone=vgg16".into()));
        }
        if !path.exists() {
            return Err(Error::Load {
                path: path.to_path_buf(),
                message: "file not found".into(),
            });
        }
        let tensors = candle_core::safetensors::load(path, store.device()).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let backbone: HashMap<String, Tensor> = tensors
            .into_iter()
            .map(|(k, v)| (format!("backbone.{k}"), v))
            .collect();
        let mut loaded = 0;
        for (name, var) in store.iter().filter(|(n, _)| n.starts_with("backbone.")) {
            let t = backbone.get(name).ok_or_else(|| Error::Load {
                path: path.to_path_buf(),
                message: format!("missing tensor `{}`", &name["backbone.".len()..]),
            })?;
            if t.dims() != var.dims() {
                return Err(Error::Load {
                    path: path.to_path_buf(),
                    message: format!(
                        "tensor `{}` has shape {:?}, expected {:?}",
                        &name["backbone.".len()..],
                        t.dims(),
                        var.dims()
                    ),
                });
            }
            var.set(&t.to_dtype(store.dtype())?)?;
            loaded += 1;
        }
        Ok(loaded)
    }
}
