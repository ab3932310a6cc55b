//! Learnable networks: image transform network, dual-head task network and
//! patch discriminators.

pub mod discriminator;
pub mod im2col;
pub mod layers;
pub mod params;
pub mod task;
pub mod transform;

use std::path::Path;

use candle_core::{DType, Device};

pub use discriminator::{PatchDiscriminator, PatchDiscriminatorConfig};
pub use params::ParamStore;
pub use task::{Backbone, TaskNet, TaskNetConfig, TaskOutput};
pub use transform::{TransformNet, TransformNetConfig};

use crate::error::Result;

pub fn init_transform(
    cfg: TransformNetConfig,
    seed: u64,
    dtype: DType,
    device: &Device,
) -> Result<(TransformNet, ParamStore)> {
    let mut store = ParamStore::new(dtype, device);
    let net = TransformNet::new(cfg, &mut store, &mut params::seeded_rng(seed))?;
    Ok((net, store))
}

/// Builds the task network; a VGG16 backbone is overwritten from
/// `pretrained` when a path is given.
pub fn init_task(
    cfg: TaskNetConfig,
    seed: u64,
    pretrained: Option<&Path>,
    dtype: DType,
    device: &Device,
) -> Result<(TaskNet, ParamStore)> {
    let mut store = ParamStore::new(dtype, device);
    let net = TaskNet::new(cfg, &mut store, &mut params::seeded_rng(seed))?;
    if let Some(path) = pretrained {
        net.load_pretrained_backbone(&store, path)?;
    }
    Ok((net, store))
}

pub fn init_discriminator(
    cfg: PatchDiscriminatorConfig,
    seed: u64,
    dtype: DType,
    device: &Device,
) -> Result<(PatchDiscriminator, ParamStore)> {
    let mut store = ParamStore::new(dtype, device);
    let net = PatchDiscriminator::new(cfg, &mut store, &mut params::seeded_rng(seed))?;
    Ok((net, store))
}
