//! Checkpoints and inference exports.
//!
//! A checkpoint is a directory `step_<n>/` holding `params.safetensors`
//! (every network), `optim.safetensors` (Adam moments) and `state.json`.
//! It is written under a temporary name and renamed into place; the
//! `LATEST` pointer file is replaced the same way. The inference export
//! (`inference/`) carries only the task network.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::step::{TrainConfig, Trainer};
use super::variant::Variant;
use crate::error::{Error, Result};
use crate::networks::{init_task, ParamStore, TaskNet, TaskNetConfig, TransformNet};
use crate::types::{ClassSet, DepthNormalizer};

const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointState {
    pub format: u32,
    pub variant: Variant,
    pub config: TrainConfig,
    pub classes: ClassSet,
    pub depth_norm: DepthNormalizer,
    pub min_side: usize,
    pub step: u64,
    pub opt_g_steps: u64,
    pub opt_d_steps: u64,
    pub components: Vec<String>,
}

/// Contents of an inference export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub format: u32,
    pub variant: Variant,
    pub task: TaskNetConfig,
    pub classes: ClassSet,
    pub depth_norm: DepthNormalizer,
    pub step: u64,
}

pub struct Checkpoint;

impl Checkpoint {
    /// Writes `dir/step_<n>` atomically and points `dir/LATEST` at it;
    /// older checkpoints beyond `keep` are pruned.
    pub fn save(trainer: &Trainer, dir: &Path, keep: usize) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let name = format!("step_{:08}", trainer.step);
        let final_path = dir.join(&name);
        let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

        save_tensors(&trainer.models.tensors(), &tmp.join("params.safetensors"))?;
        let mut optim = trainer.opt_g.state_tensors("gen.");
        optim.extend(trainer.opt_d.state_tensors("disc."));
        save_tensors(&optim, &tmp.join("optim.safetensors"))?;
        let state = CheckpointState {
            format: FORMAT,
            variant: trainer.variant,
            config: trainer.config.clone(),
            classes: trainer.classes.clone(),
            depth_norm: trainer.depth_norm,
            min_side: trainer.min_side,
            step: trainer.step,
            opt_g_steps: trainer.opt_g.steps(),
            opt_d_steps: trainer.opt_d.steps(),
            components: trainer.models.component_names(),
        };
        write_json(&tmp.join("state.json"), &state)?;

        if final_path.exists() {
            fs::remove_dir_all(&final_path).map_err(|e| Error::io(&final_path, e))?;
        }
        fs::rename(&tmp, &final_path).map_err(|e| Error::io(&final_path, e))?;
        write_atomic(&dir.join("LATEST"), name.as_bytes())?;
        prune(dir, keep)?;
        Ok(final_path)
    }

    /// Most recent checkpoint under `dir`, if any.
    pub fn latest(dir: &Path) -> Result<Option<PathBuf>> {
        let ptr = dir.join("LATEST");
        if !ptr.exists() {
            return Ok(None);
        }
        let name = fs::read_to_string(&ptr).map_err(|e| Error::io(&ptr, e))?;
        let path = dir.join(name.trim());
        if !path.join("state.json").exists() {
            return Err(Error::Load {
                path,
                message: "LATEST points at an incomplete checkpoint".into(),
            });
        }
        Ok(Some(path))
    }

    pub fn read_state(path: &Path) -> Result<CheckpointState> {
        let p = path.join("state.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let state: CheckpointState = serde_json::from_str(&text).map_err(|e| Error::Load {
            path: p.clone(),
            message: e.to_string(),
        })?;
        if state.format != FORMAT {
            return Err(Error::Incompatible(format!(
                "{} has checkpoint format {}, expected {FORMAT}",
                p.display(),
                state.format
            )));
        }
        Ok(state)
    }

    /// Rebuilds the full training state stored at `path`.
    pub fn restore(path: &Path) -> Result<Trainer> {
        let state = Self::read_state(path)?;
        let mut trainer = Trainer::new(
            state.variant,
            state.classes.clone(),
            state.depth_norm,
            state.config.clone(),
            state.min_side,
        )?;
        let params_path = path.join("params.safetensors");
        trainer.models.assign(&load_tensors(&params_path)?, &params_path)?;
        let optim_path = path.join("optim.safetensors");
        let optim = load_tensors(&optim_path)?;
        trainer.opt_g.load_state(&optim, "gen.", state.opt_g_steps)?;
        trainer.opt_d.load_state(&optim, "disc.", state.opt_d_steps)?;
        trainer.step = state.step;
        Ok(trainer)
    }

    /// Checks that a stored run can be continued with `variant`/`config`.
    /// Only the epoch budget and checkpoint period may differ.
    pub fn check_compatible(state: &CheckpointState, variant: Variant, config: &TrainConfig, classes: &ClassSet) -> Result<()> {
        if state.variant != variant {
            return Err(Error::Incompatible(format!(
                "checkpoint variant {} differs from requested {variant}",
                state.variant
            )));
        }
        if &state.classes != classes {
            return Err(Error::Incompatible("checkpoint class set differs from the dataset's".into()));
        }
        let mut a = state.config.clone();
        let mut b = config.clone();
        a.epochs = 0;
        b.epochs = 0;
        a.checkpoint_every = 0;
        b.checkpoint_every = 0;
        if a != b {
            let sa = serde_json::to_value(&a)?;
            let sb = serde_json::to_value(&b)?;
            let diff = diff_keys(&sa, &sb, "train");
            return Err(Error::Incompatible(format!(
                "training configuration differs from the checkpoint at: {}",
                diff.join(", ")
            )));
        }
        Ok(())
    }

    /// Writes the task-network-only export to `dir`.
    pub fn export_inference(trainer: &Trainer, dir: &Path) -> Result<PathBuf> {
        let tmp = dir.with_extension(format!("tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        save_tensors(&trainer.models.g_task.params.to_tensors("g_task."), &tmp.join("g_task.safetensors"))?;
        let manifest = ExportManifest {
            format: FORMAT,
            variant: trainer.variant,
            task: *trainer.models.g_task.net.config(),
            classes: trainer.classes.clone(),
            depth_norm: trainer.depth_norm,
            step: trainer.step,
        };
        write_json(&tmp.join("model.json"), &manifest)?;
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
        Ok(dir.to_path_buf())
    }
}

/// Networks needed at test time (plus the transform network when the
/// source is a full checkpoint that has one).
pub struct InferenceModel {
    pub variant: Variant,
    pub classes: ClassSet,
    pub depth_norm: DepthNormalizer,
    pub task: TaskNet,
    pub task_params: ParamStore,
    pub transform: Option<(TransformNet, crate::trainer::Wiring)>,
}

impl InferenceModel {
    /// Translated source image (1×3×H×W) for a source sample.
    pub fn translate(&self, sample: &crate::types::Sample) -> Result<Tensor> {
        let (net, wiring) = self.transform.as_ref().ok_or_else(|| {
            Error::Capability(format!(
                "no image transform network (variant {}); translation needs a full checkpoint of an input-level variant",
                self.variant
            ))
        })?;
        let enc = crate::encoding::encode_input(sample, self.classes.num_classes(), self.classes.ignore_index, &self.depth_norm)?;
        let x = enc.select(wiring.transform_uses_semantics, wiring.transform_uses_depth);
        net.forward(&crate::encoding::hwc_to_tensor(&x, DType::F32, &Device::Cpu)?)
    }
}

/// Loads from an inference export, a checkpoint directory, or a directory
/// containing `LATEST` (a run's `checkpoints/` or the run directory).
pub fn load_inference(path: &Path) -> Result<InferenceModel> {
    if path.join("model.json").exists() {
        let p = path.join("model.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let m: ExportManifest = serde_json::from_str(&text).map_err(|e| Error::Load {
            path: p.clone(),
            message: e.to_string(),
        })?;
        let (task, task_params) = init_task(m.task, 0, None, DType::F32, &Device::Cpu)?;
        let wp = path.join("g_task.safetensors");
        task_params.assign_from(&load_tensors(&wp)?, "g_task.", &wp)?;
        return Ok(InferenceModel {
            variant: m.variant,
            classes: m.classes,
            depth_norm: m.depth_norm,
            task,
            task_params,
            transform: None,
        });
    }
    let ckpt = if path.join("state.json").exists() {
        path.to_path_buf()
    } else if let Some(p) = Checkpoint::latest(path)? {
        p
    } else if let Some(p) = Checkpoint::latest(&path.join("checkpoints"))? {
        p
    } else {
        return Err(Error::Load {
            path: path.to_path_buf(),
            message: "neither an inference export, a checkpoint, nor a run directory".into(),
        });
    };
    let trainer = Checkpoint::restore(&ckpt)?;
    let transform = trainer.models.g_img.as_ref().map(|g| (g.net.clone(), trainer.wiring.clone()));
    Ok(InferenceModel {
        variant: trainer.variant,
        classes: trainer.classes.clone(),
        depth_norm: trainer.depth_norm,
        task: trainer.models.g_task.net.clone(),
        task_params: trainer.models.g_task.params.clone(),
        transform,
    })
}

fn save_tensors(t: &HashMap<String, Tensor>, path: &Path) -> Result<()> {
    candle_core::safetensors::save(t, path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: format!("write failed: {e}"),
    })
}

pub(crate) fn load_tensors(path: &Path) -> Result<HashMap<String, Tensor>> {
    if !path.exists() {
        return Err(Error::Load {
            path: path.to_path_buf(),
            message: "file not found".into(),
        });
    }
    candle_core::safetensors::load(path, &Device::Cpu).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

/// Write to a sibling temp file, then rename over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn prune(dir: &Path, keep: usize) -> Result<()> {
    let mut steps: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("step_")))
        .collect();
    steps.sort();
    let excess = steps.len().saturating_sub(keep.max(1));
    for p in &steps[..excess] {
        fs::remove_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn diff_keys(a: &serde_json::Value, b: &serde_json::Value, prefix: &str) -> Vec<String> {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            keys.into_iter()
                .flat_map(|k| {
                    let p = format!("{prefix}.{k}");
                    match (x.get(k), y.get(k)) {
                        (Some(va), Some(vb)) => diff_keys(va, vb, &p),
                        _ => vec![p],
                    }
                })
                .collect()
        }
        _ if a == b => vec![],
        _ => vec![prefix.to_string()],
    }
}
