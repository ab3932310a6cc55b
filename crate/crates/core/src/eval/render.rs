//! Label colorization and text result tables.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ClassSet;

/// Palette lookup; ignored or unknown labels become black.
pub fn colorize(labels: &Array2<u8>, classes: &ClassSet) -> Array3<u8> {
    let (h, w) = labels.dim();
    Array3::from_shape_fn((h, w, 3), |(i, j, k)| {
        classes
            .palette
            .get(labels[[i, j]] as usize)
            .map_or(0, |c| c[k])
    })
}

/// Per-class IoU of one method (`None` = class absent from the evaluation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub class_names: Vec<String>,
    pub per_class: Vec<Option<f64>>,
}

impl MethodResult {
    /// Mean over present classes, optionally restricted to `subset`.
    pub fn mean(&self, subset: Option<&[usize]>) -> Option<f64> {
        let vals: Vec<f64> = match subset {
            Some(s) => s.iter().filter_map(|&k| self.per_class.get(k).copied().flatten()).collect(),
            None => self.per_class.iter().filter_map(|v| *v).collect(),
        };
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Published full-scale numbers (mIoU, percent), shown for context only.
pub mod reference {
    pub const VKITTI_TO_KITTI_NON_ADAPT: f64 = 37.5;
    pub const VKITTI_TO_KITTI_FULL: f64 = 53.5;
    pub const SYNTHIA_TO_CITYSCAPES_NON_ADAPT: f64 = 23.3;
    pub const SYNTHIA_TO_CITYSCAPES_FULL: f64 = 37.3;
    pub const OUTPUT_ABLATION_SS: f64 = 45.9;
    pub const OUTPUT_ABLATION_SEP: f64 = 46.3;
    pub const OUTPUT_ABLATION_JOINT: f64 = 50.0;
}

/// Markdown table with one row per method, per-class IoU columns in class
/// order, `mIoU`, and `mIoU excl.*` when the class set has an evaluation
/// subset (excluded classes carry a `*`). Values are percentages; the best
/// value of every column is shown in bold.
pub fn render_table(results: &[MethodResult], classes: &ClassSet) -> Result<String> {
    for r in results {
        if r.class_names != classes.names || r.per_class.len() != classes.num_classes() {
            return Err(Error::InvalidInput(format!(
                "method `{}` was evaluated on classes {:?}, table expects {:?}",
                r.method, r.class_names, classes.names
            )));
        }
    }
    let subset = classes.eval_subset.as_deref();
    let mut header: Vec<String> = vec!["method".into()];
    header.extend(classes.names.iter().enumerate().map(|(k, n)| {
        if classes.is_excluded(k) {
            format!("{n}*")
        } else {
            n.clone()
        }
    }));
    header.push("mIoU".into());
    if subset.is_some() {
        header.push("mIoU excl.*".into());
    }

    // column-major numeric cells
    let mut columns: Vec<Vec<Option<f64>>> = (0..classes.num_classes())
        .map(|k| results.iter().map(|r| r.per_class[k]).collect())
        .collect();
    columns.push(results.iter().map(|r| r.mean(None)).collect());
    if subset.is_some() {
        columns.push(results.iter().map(|r| r.mean(subset)).collect());
    }
    let cell = |v: Option<f64>, best: Option<f64>| match v {
        None => "-".to_string(),
        Some(x) => {
            let s = format!("{:.1}", 100.0 * x);
            if best.is_some_and(|b| format!("{:.1}", 100.0 * b) == s) {
                format!("**{s}**")
            } else {
                s
            }
        }
    };
    let bests: Vec<Option<f64>> = columns
        .iter()
        .map(|col| col.iter().flatten().copied().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))))
        .collect();

    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for (i, r) in results.iter().enumerate() {
        let mut row = vec![r.method.clone()];
        row.extend(columns.iter().zip(&bests).map(|(col, &b)| cell(col[i], b)));
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{argmax_channels, one_hot};

    fn result(method: &str, cs: &ClassSet, iou: &[f64]) -> MethodResult {
        MethodResult {
            method: method.into(),
            class_names: cs.names.clone(),
            per_class: iou.iter().map(|&v| Some(v)).collect(),
        }
    }

    #[test]
    fn colorize_palette_and_ignore() {
        let cs = ClassSet::toy();
        let black = colorize(&Array2::from_elem((3, 4), 255u8), &cs);
        assert!(black.iter().all(|&v| v == 0));
        let road = colorize(&Array2::from_elem((2, 2), 1u8), &cs);
        for px in road.exact_chunks((1, 1, 3)) {
            assert_eq!(px.iter().copied().collect::<Vec<_>>(), cs.palette[1].to_vec());
        }
    }

    #[test]
    fn colorize_after_one_hot_argmax_round_trip() {
        let cs = ClassSet::toy();
        let labels = Array2::from_shape_fn((5, 7), |(i, j)| if (i * j) % 5 == 4 { 255 } else { ((i + 2 * j) % 4) as u8 });
        let back = argmax_channels(&one_hot(&labels, 4, 255).unwrap(), 255);
        assert_eq!(colorize(&back, &cs), colorize(&labels, &cs));
    }

    #[test]
    fn best_values_are_bold_per_column() {
        let cs = ClassSet::toy();
        let t = render_table(
            &[result("na", &cs, &[0.9, 0.5, 0.2, 0.1]), result("joint", &cs, &[0.8, 0.6, 0.3, 0.1])],
            &cs,
        )
        .unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "| method | sky | road | building | obstacle | mIoU |");
        assert_eq!(lines[2], "| na | **90.0** | 50.0 | 20.0 | **10.0** | 42.5 |");
        assert_eq!(lines[3], "| joint | 80.0 | **60.0** | **30.0** | **10.0** | **45.0** |");
    }

    #[test]
    fn single_method_is_best_everywhere() {
        let cs = ClassSet::toy();
        let t = render_table(&[result("only", &cs, &[0.1, 0.2, 0.3, 0.4])], &cs).unwrap();
        assert_eq!(t.lines().nth(2).unwrap().matches("**").count(), 10);
    }

    #[test]
    fn subset_mode_emits_both_means() {
        let cs = ClassSet::synthia16();
        let t = render_table(&[result("full", &cs, &[0.5; 16])], &cs).unwrap();
        let header = t.lines().next().unwrap();
        assert!(header.contains("wall*") && header.contains("fence*") && header.contains("pole*"));
        assert!(header.ends_with("| mIoU | mIoU excl.* |"));
        assert!(!header.contains("road*"));
    }

    #[test]
    fn mismatched_class_sets_are_rejected() {
        let toy = ClassSet::toy();
        let vk = ClassSet::vkitti10();
        let err = render_table(&[result("a", &vk, &[0.5; 10])], &toy).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
