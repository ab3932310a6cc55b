//! One alternation of the min-max game: discriminators first, then the
//! transform and task networks jointly.

use candle_core::{DType, Device, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::model::{output_map, ArchConfig, Models};
use super::variant::{variant_wiring, Variant, Wiring};
use crate::encoding::{encode_input, hw_to_tensor, hwc_to_tensor, labels_to_onehot_tensor, normalize_depth};
use crate::error::{Error, Result};
use crate::losses::{self, GanLoss, LossReport};
use crate::types::{ClassSet, DepthNormalizer, LossWeights, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weights: LossWeights,
    pub seed: u64,
    /// Checkpoint period in iterations (0 disables intermediate checkpoints).
    pub checkpoint_every: u64,
    pub gan_loss: GanLoss,
    /// Random horizontal flips.
    pub augment: bool,
    /// Exclude zero-depth (sensor-invalid) pixels from the depth loss.
    pub mask_zero_depth: bool,
    /// Period of the adversarial-hygiene self-checks (0 disables them).
    pub hygiene_every: u64,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: 1000,
            gan_loss: GanLoss::default(),
            augment: true,
            mask_zero_depth: false,
            hygiene_every: 100,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr must be > 0, got {}", self.lr)));
        }
        if self.epochs < 1 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        for (k, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("train.{k} must lie in [0, 1), got {b}")));
            }
        }
        self.weights.validate()
    }
}

/// Result of the periodic self-checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hygiene {
    pub step: u64,
    /// Generator checksums unchanged by the discriminator update.
    pub generators_frozen_in_d_phase: bool,
    /// Discriminator checksums unchanged by the generator update.
    pub discriminators_frozen_in_g_phase: bool,
    /// The target image got no gradient from the supervised losses.
    pub target_free_of_supervised_gradient: bool,
}

impl Hygiene {
    pub fn ok(&self) -> bool {
        self.generators_frozen_in_d_phase
            && self.discriminators_frozen_in_g_phase
            && self.target_free_of_supervised_gradient
    }
}

/// Complete mutable training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub variant: Variant,
    pub wiring: Wiring,
    pub config: TrainConfig,
    pub classes: ClassSet,
    pub depth_norm: DepthNormalizer,
    pub models: Models,
    pub opt_g: Adam,
    pub opt_d: Adam,
    /// Smaller image side the transform network was sized for.
    pub min_side: usize,
    /// Number of completed steps.
    pub step: u64,
    pub last_hygiene: Option<Hygiene>,
    device: Device,
}

impl Trainer {
    pub fn new(
        variant: Variant,
        classes: ClassSet,
        depth_norm: DepthNormalizer,
        config: TrainConfig,
        min_side: usize,
    ) -> Result<Self> {
        config.validate()?;
        classes.validate()?;
        depth_norm.validate()?;
        let device = Device::Cpu;
        let wiring = variant_wiring(variant, classes.num_classes());
        let models = Models::new(&wiring, &config.arch, config.seed, min_side, &device)?;
        Ok(Trainer {
            variant,
            wiring,
            opt_g: Adam::new(config.lr, config.beta1, config.beta2),
            opt_d: Adam::new(config.lr, config.beta1, config.beta2),
            config,
            classes,
            depth_norm,
            models,
            min_side,
            step: 0,
            last_hygiene: None,
            device,
        })
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Transform-network input for a source sample per the wiring.
    fn transform_input(&self, source: &Sample) -> Result<Tensor> {
        let enc = encode_input(
            source,
            self.classes.num_classes(),
            self.classes.ignore_index,
            &self.depth_norm,
        )?;
        let x = enc.select(self.wiring.transform_uses_semantics, self.wiring.transform_uses_depth);
        hwc_to_tensor(&x, DType::F32, &self.device)
    }

    /// Runs one D-then-G alternation on a (source, target) pair.
    pub fn train_step(&mut self, source: &Sample, target: &Sample) -> Result<LossReport> {
        let iteration = self.step;
        let check = self.config.hygiene_every > 0 && iteration.is_multiple_of(self.config.hygiene_every);
        let mode = self.config.gan_loss;
        let w = self.config.weights;
        let dev = self.device.clone();

        let labels = source
            .train_labels()
            .ok_or_else(|| Error::Precondition(format!("source sample `{}` has no labels", source.id)))?;
        let depth_m = source
            .train_depth()
            .ok_or_else(|| Error::Precondition(format!("source sample `{}` has no depth", source.id)))?;
        let onehot = labels_to_onehot_tensor(labels, self.classes.num_classes(), self.classes.ignore_index, DType::F32, &dev)?;
        let depth_gt = hw_to_tensor(&normalize_depth(depth_m, &self.depth_norm)?, DType::F32, &dev)?;
        let depth_mask = if self.config.mask_zero_depth {
            Some(hw_to_tensor(&depth_m.mapv(|d| if d > 0.0 { 1.0 } else { 0.0 }), DType::F32, &dev)?)
        } else {
            None
        };
        let x_s = hwc_to_tensor(&source.image, DType::F32, &dev)?;
        let x_t_var = Var::from_tensor(&hwc_to_tensor(&target.image, DType::F32, &dev)?)?;
        let x_t = x_t_var.as_tensor().clone();

        // (1) forward passes
        let fake = match &self.models.g_img {
            Some(g) => Some(g.net.forward(&self.transform_input(source)?)?),
            None => None,
        };
        let task_in = match &fake {
            Some(f) if self.wiring.task_gradient_to_transform => f.clone(),
            Some(f) => f.detach(),
            None => x_s,
        };
        let src_out = self.models.g_task.net.forward(&task_in)?;
        let tgt_out = if self.models.d_out.is_empty() {
            None
        } else {
            Some(self.models.g_task.net.forward(&x_t)?)
        };

        // (2) discriminator phase on detached inputs
        let g_before = if check { Some(self.models.generator_checksum()?) } else { None };
        let mut adv_image_d = None;
        let mut adv_output_d = None;
        let mut d_total: Option<Tensor> = None;
        let add = |acc: &mut Option<Tensor>, t: Tensor| -> Result<()> {
            *acc = Some(match acc.take() {
                Some(a) => (a + t)?,
                None => t,
            });
            Ok(())
        };
        if let (Some(d), Some(f)) = (&self.models.d_img, &fake) {
            let l = losses::adv_disc_loss(&d.net.forward(&x_t)?, &d.net.forward(&f.detach())?, mode)?;
            adv_image_d = Some(finite(&l, iteration, "adv_image_d")?);
            add(&mut d_total, l)?;
        }
        if let Some(tgt_out) = &tgt_out {
            let mut sum = 0.0;
            for (map, d) in &self.models.d_out {
                // target maps play the "real" side
                let real = output_map(tgt_out, *map)?.detach();
                let fake = output_map(&src_out, *map)?.detach();
                let l = losses::adv_disc_loss(&d.net.forward(&real)?, &d.net.forward(&fake)?, mode)?;
                sum += finite(&l, iteration, "adv_output_d")?;
                add(&mut d_total, l)?;
            }
            adv_output_d = Some(sum);
        }
        if let Some(l) = d_total {
            let grads = l.backward()?;
            self.opt_d.step(&self.models.discriminator_params(), &grads)?;
        }
        let generators_frozen = match g_before {
            Some(b) => b == self.models.generator_checksum()?,
            None => true,
        };

        // (3) generator phase against the updated, frozen discriminators
        let seg = losses::seg_loss(&src_out.seg_logits, &onehot)?.loss;
        let seg_v = finite(&seg, iteration, "seg")?;
        let src_depth = src_out
            .depth
            .as_ref()
            .ok_or_else(|| Error::Precondition("task network has no depth head".into()))?;
        let depth = losses::depth_loss(src_depth, &depth_gt, depth_mask.as_ref())?.loss;
        let depth_v = finite(&depth, iteration, "depth")?;
        let mut adv_image_g = None;
        let adv_img = match (&self.models.d_img, &fake) {
            (Some(d), Some(f)) => {
                let l = losses::adv_gen_loss(&d.net.forward(f)?, mode)?;
                adv_image_g = Some(finite(&l, iteration, "adv_image_g")?);
                Some(l)
            }
            _ => None,
        };
        let mut adv_output_g = None;
        let mut adv_out: Option<Tensor> = None;
        if let Some(tgt_out) = &tgt_out {
            for (map, d) in &self.models.d_out {
                let fake = d.net.forward(&output_map(&src_out, *map)?)?;
                let real = d.net.forward(&output_map(tgt_out, *map)?)?;
                let l = losses::adv_gen_loss_swapped(&fake, &real, mode)?;
                add(&mut adv_out, l)?;
            }
            adv_output_g = adv_out.as_ref().map(|l| finite(l, iteration, "adv_output_g")).transpose()?;
        }
        let total = losses::total_generator_tensor(&seg, Some(&depth), adv_img.as_ref(), adv_out.as_ref(), &w)?;
        let total_v = finite(&total, iteration, "total_g")?;

        let d_before = if check { Some(self.models.discriminator_checksum()?) } else { None };
        let grads = total.backward()?;
        self.opt_g.step(&self.models.generator_params(), &grads)?;
        let discriminators_frozen = match d_before {
            Some(b) => b == self.models.discriminator_checksum()?,
            None => true,
        };

        if check {
            let supervised = (&seg + (&depth * w.lambda_depth)?)?;
            let g = supervised.backward()?;
            let target_clean = match g.get(x_t_var.as_tensor()) {
                None => true,
                Some(t) => t.abs()?.sum_all()?.to_scalar::<f32>()? == 0.0,
            };
            let h = Hygiene {
                step: iteration,
                generators_frozen_in_d_phase: generators_frozen,
                discriminators_frozen_in_g_phase: discriminators_frozen,
                target_free_of_supervised_gradient: target_clean,
            };
            self.last_hygiene = Some(h);
            if !h.ok() {
                return Err(Error::Invariant(format!("adversarial hygiene check failed: {h:?}")));
            }
        }

        self.step += 1;
        Ok(LossReport {
            step: iteration,
            seg: seg_v,
            depth: Some(depth_v),
            adv_image_g,
            adv_image_d,
            adv_output_g,
            adv_output_d,
            total_g: total_v,
        })
    }
}

/// Free-function form of [`Trainer::train_step`].
pub fn train_step(pair: (&Sample, &Sample), state: &mut Trainer) -> Result<LossReport> {
    state.train_step(pair.0, pair.1)
}

fn finite(t: &Tensor, iteration: u64, term: &str) -> Result<f64> {
    let v = t.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            iteration,
            term: term.to_string(),
        })
    }
}
