//! Segmentation metrics, qualitative renderings and result tables.

pub mod metrics;
pub mod render;

use std::fs;
use std::path::Path;

use candle_core::{DType, Device};
use image::{ImageBuffer, Rgb};
use ndarray::{concatenate, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

pub use metrics::{accumulate, miou, ConfusionMatrix};
pub use render::{colorize, reference, render_table, MethodResult};

use crate::data::SampleSource;
use crate::encoding::hwc_to_tensor;
use crate::error::{Error, Result};
use crate::losses::predict_labels;
use crate::networks::layers::resize_bilinear;
use crate::networks::TaskNet;
use crate::trainer::InferenceModel;
use crate::types::{deprocess_channel, ClassSet, Sample};

/// Metrics of one model on one labelled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    /// Mean over the class set's evaluation subset, when it has one.
    pub miou_subset: Option<f64>,
    pub pixel_accuracy: Option<f64>,
    pub num_images: usize,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn method_result(&self, method: &str) -> MethodResult {
        MethodResult {
            method: method.to_string(),
            class_names: self.class_names.clone(),
            per_class: self.per_class_iou.clone(),
        }
    }
}

/// Arg-max labels at the ground-truth resolution (`gt_size`, defaulting to
/// the input size); logits are bilinearly upsampled first.
pub fn predict(task: &TaskNet, sample: &Sample, gt_size: Option<(usize, usize)>) -> Result<Array2<u8>> {
    let x = hwc_to_tensor(&sample.image, DType::F32, &Device::Cpu)?;
    let out = task.forward(&x)?;
    let logits = match gt_size {
        Some((h, w)) if (h, w) != (sample.height(), sample.width()) => resize_bilinear(&out.seg_logits, h, w)?,
        _ => out.seg_logits,
    };
    predict_labels(&logits)
}

/// Scores `task` on every labelled sample; with `dump_dir`, also writes
/// `<id>.png` panels (input | ground truth | prediction).
pub fn evaluate<S: SampleSource + ?Sized>(
    task: &TaskNet,
    classes: &ClassSet,
    samples: &S,
    dump_dir: Option<&Path>,
) -> Result<EvalReport> {
    if task.config().num_classes != classes.num_classes() {
        return Err(Error::InvalidInput(format!(
            "model predicts {} classes, dataset has {}",
            task.config().num_classes,
            classes.num_classes()
        )));
    }
    if let Some(d) = dump_dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut cm = ConfusionMatrix::new(classes.num_classes());
    for i in 0..samples.len() {
        let s = samples.get(i)?;
        let gt = s
            .eval_labels()
            .ok_or_else(|| Error::Precondition(format!("sample `{}` has no evaluation labels", s.id)))?;
        let pred = predict(task, &s, Some(gt.dim()))?;
        cm.accumulate(&pred, gt, classes.ignore_index)?;
        if let Some(d) = dump_dir {
            write_panel(&d.join(format!("{}.png", s.id)), &s, gt, &pred, classes)?;
        }
    }
    let (per_class_iou, mean) = cm.miou(None);
    let miou_subset = classes.eval_subset.as_deref().map(|s| cm.miou(Some(s)).1);
    Ok(EvalReport {
        class_names: classes.names.clone(),
        per_class_iou,
        miou: mean,
        miou_subset,
        pixel_accuracy: cm.pixel_accuracy(),
        num_images: samples.len(),
        confusion: cm,
    })
}

/// [`evaluate`] for a loaded model, checking the class sets agree.
pub fn evaluate_model<S: SampleSource + ?Sized>(
    model: &InferenceModel,
    dataset_classes: &ClassSet,
    samples: &S,
    dump_dir: Option<&Path>,
) -> Result<EvalReport> {
    if model.classes.names != dataset_classes.names {
        return Err(Error::InvalidInput(format!(
            "checkpoint classes {:?} differ from dataset classes {:?}",
            model.classes.names, dataset_classes.names
        )));
    }
    evaluate(&model.task, dataset_classes, samples, dump_dir)
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    crate::trainer::checkpoint::write_json(path, report)
}

fn write_panel(path: &Path, s: &Sample, gt: &Array2<u8>, pred: &Array2<u8>, classes: &ClassSet) -> Result<()> {
    let img: Array3<u8> = s.image.mapv(deprocess_channel);
    let (g, p) = (colorize(gt, classes), colorize(pred, classes));
    let parts = [img.view(), g.view(), p.view()];
    if parts.iter().any(|p| p.dim().0 != img.dim().0) {
        return Err(Error::shape("panel height", img.dim().0, gt.dim().0));
    }
    let panel = concatenate(Axis(1), &parts).map_err(|e| Error::Numeric(e.to_string()))?;
    save_rgb(path, &panel)
}

pub fn save_rgb(path: &Path, x: &Array3<u8>) -> Result<()> {
    let (h, w, _) = x.dim();
    let data: Vec<u8> = x.as_standard_layout().iter().copied().collect();
    let buf = ImageBuffer::<Rgb<u8>, Vec<u8>>::from_raw(w as u32, h as u32, data)
        .ok_or_else(|| Error::shape("RGB buffer", h * w * 3, x.len()))?;
    buf.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
