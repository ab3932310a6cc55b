//! The set of networks a variant trains, with their parameters.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::variant::{OutputMap, Wiring};
use crate::error::{Error, Result};
use crate::losses;
use crate::networks::{
    init_discriminator, init_task, init_transform, Backbone, PatchDiscriminator, PatchDiscriminatorConfig,
    ParamStore, TaskNet, TaskNetConfig, TaskOutput, TransformNet, TransformNetConfig,
};

/// Architecture hyper-parameters of every network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub backbone: Backbone,
    pub output_stride: usize,
    pub tiny_width: usize,
    /// Safetensors file with ImageNet VGG16 conv weights.
    pub pretrained: Option<PathBuf>,
    pub transform_width: usize,
    /// `None`: 9 blocks for inputs of at least 256 px, else 6.
    pub transform_blocks: Option<usize>,
    pub disc_layers: usize,
    pub disc_width: usize,
    pub disc_padding: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            backbone: Backbone::Vgg16,
            output_stride: 8,
            tiny_width: 16,
            pretrained: None,
            transform_width: 64,
            transform_blocks: None,
            disc_layers: 3,
            disc_width: 64,
            disc_padding: 1,
        }
    }
}

impl ArchConfig {
    /// Small widths for desk-scale toy runs.
    pub fn toy() -> Self {
        ArchConfig {
            backbone: Backbone::Tiny,
            output_stride: 2,
            tiny_width: 16,
            pretrained: None,
            transform_width: 8,
            transform_blocks: Some(2),
            disc_layers: 3,
            disc_width: 16,
            disc_padding: 1,
        }
    }

    pub fn task_config(&self, num_classes: usize) -> TaskNetConfig {
        TaskNetConfig {
            backbone: self.backbone,
            num_classes,
            depth_head: true,
            output_stride: self.output_stride,
            tiny_width: self.tiny_width,
        }
    }

    fn transform_config(&self, in_channels: usize, min_side: usize) -> TransformNetConfig {
        let mut cfg = TransformNetConfig::for_input(in_channels, min_side);
        cfg.base_width = self.transform_width;
        if let Some(b) = self.transform_blocks {
            cfg.n_residual_blocks = b;
        }
        cfg
    }

    fn disc_config(&self, in_channels: usize) -> PatchDiscriminatorConfig {
        PatchDiscriminatorConfig {
            in_channels,
            n_layers: self.disc_layers,
            base_width: self.disc_width,
            padding: self.disc_padding,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Net<N> {
    pub net: N,
    pub params: ParamStore,
}

/// Fixed seed offsets so every variant starts from the same task network.
const SEED_TASK: u64 = 0;
const SEED_TRANSFORM: u64 = 1;
const SEED_D_IMAGE: u64 = 2;
const SEED_D_OUTPUT: u64 = 3;

fn component_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(16).wrapping_add(k)
}

/// Every network of one variant.
#[derive(Debug, Clone)]
pub struct Models {
    pub wiring: Wiring,
    pub g_img: Option<Net<TransformNet>>,
    pub g_task: Net<TaskNet>,
    pub d_img: Option<Net<PatchDiscriminator>>,
    pub d_out: Vec<(OutputMap, Net<PatchDiscriminator>)>,
}

impl Models {
    pub fn new(wiring: &Wiring, arch: &ArchConfig, seed: u64, min_side: usize, device: &Device) -> Result<Self> {
        let dt = DType::F32;
        let (net, params) = init_task(
            arch.task_config(wiring.num_classes),
            component_seed(seed, SEED_TASK),
            arch.pretrained.as_deref(),
            dt,
            device,
        )?;
        let g_task = Net { net, params };
        let g_img = match wiring.transform_in_channels {
            Some(k) => {
                let (net, params) = init_transform(
                    arch.transform_config(k, min_side),
                    component_seed(seed, SEED_TRANSFORM),
                    dt,
                    device,
                )?;
                Some(Net { net, params })
            }
            None => None,
        };
        let d_img = match wiring.d_image_channels {
            Some(k) => {
                let (net, params) = init_discriminator(arch.disc_config(k), component_seed(seed, SEED_D_IMAGE), dt, device)?;
                Some(Net { net, params })
            }
            None => None,
        };
        let d_out = wiring
            .d_output
            .iter()
            .enumerate()
            .map(|(i, &(map, k))| {
                let (net, params) = init_discriminator(
                    arch.disc_config(k),
                    component_seed(seed, SEED_D_OUTPUT + i as u64),
                    dt,
                    device,
                )?;
                Ok((map, Net { net, params }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Models {
            wiring: wiring.clone(),
            g_img,
            g_task,
            d_img,
            d_out,
        })
    }

    /// Named parameter stores: `g_img`, `g_task`, `d_img`, `d_out0`, ...
    pub fn stores(&self) -> Vec<(String, &ParamStore)> {
        let mut out = Vec::new();
        if let Some(g) = &self.g_img {
            out.push(("g_img".to_string(), &g.params));
        }
        out.push(("g_task".to_string(), &self.g_task.params));
        if let Some(d) = &self.d_img {
            out.push(("d_img".to_string(), &d.params));
        }
        for (i, (_, d)) in self.d_out.iter().enumerate() {
            out.push((format!("d_out{i}"), &d.params));
        }
        out
    }

    pub fn component_names(&self) -> Vec<String> {
        self.stores().into_iter().map(|(n, _)| n).collect()
    }

    fn collect(&self, generator: bool) -> Vec<(String, Var)> {
        self.stores()
            .into_iter()
            .filter(|(n, _)| n.starts_with('g') == generator)
            .flat_map(|(n, s)| {
                s.iter()
                    .map(|(k, v)| (format!("{n}.{k}"), v.clone()))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn generator_params(&self) -> Vec<(String, Var)> {
        self.collect(true)
    }

    pub fn discriminator_params(&self) -> Vec<(String, Var)> {
        self.collect(false)
    }

    fn checksum_of(&self, generator: bool) -> Result<String> {
        let parts = self
            .stores()
            .into_iter()
            .filter(|(n, _)| n.starts_with('g') == generator)
            .map(|(n, s)| Ok(format!("{n}:{}", s.checksum()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.join(","))
    }

    pub fn generator_checksum(&self) -> Result<String> {
        self.checksum_of(true)
    }

    pub fn discriminator_checksum(&self) -> Result<String> {
        self.checksum_of(false)
    }

    /// All parameters keyed `<component>.<name>`.
    pub fn tensors(&self) -> HashMap<String, Tensor> {
        let mut out = HashMap::new();
        for (n, s) in self.stores() {
            out.extend(s.to_tensors(&format!("{n}.")));
        }
        out
    }

    pub fn assign(&self, tensors: &HashMap<String, Tensor>, origin: &Path) -> Result<()> {
        for (n, s) in self.stores() {
            s.assign_from(tensors, &format!("{n}."), origin)?;
        }
        Ok(())
    }
}

/// The output map a discriminator sees.
pub fn output_map(out: &TaskOutput, map: OutputMap) -> Result<Tensor> {
    let depth = || {
        out.depth
            .clone()
            .ok_or_else(|| Error::Precondition("output discriminator needs the depth head".into()))
    };
    match map {
        OutputMap::Segmentation => losses::class_probabilities(&out.seg_logits),
        OutputMap::Depth => depth(),
        OutputMap::Joint => losses::output_concat(&out.seg_logits, &depth()?),
    }
}
