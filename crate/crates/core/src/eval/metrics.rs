//! Confusion matrices and intersection-over-union.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// C×C pixel counts; rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::InvalidInput("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            num_classes: c,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.num_classes.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn diagonal_sum(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    /// Fraction of counted pixels predicted correctly (`None` when empty).
    pub fn pixel_accuracy(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| self.diagonal_sum() as f64 / t as f64)
    }

    /// Adds one prediction/ground-truth pair; ignored ground-truth pixels
    /// are skipped.
    pub fn accumulate(&mut self, pred: &Array2<u8>, gt: &Array2<u8>, ignore_index: u8) -> Result<()> {
        if pred.dim() != gt.dim() {
            return Err(Error::shape("prediction map", format!("{:?}", gt.dim()), format!("{:?}", pred.dim())));
        }
        let c = self.num_classes;
        // validate first so a failed call leaves the matrix untouched
        for (&p, &g) in pred.iter().zip(gt.iter()) {
            if g == ignore_index {
                continue;
            }
            if g as usize >= c {
                return Err(Error::InvalidInput(format!("ground-truth label {g} out of range (C = {c})")));
            }
            if p as usize >= c {
                return Err(Error::InvalidInput(format!("predicted label {p} out of range (C = {c})")));
            }
        }
        for (&p, &g) in pred.iter().zip(gt.iter()) {
            if g != ignore_index {
                self.counts[g as usize * c + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::InvalidInput(format!(
                "cannot merge confusion matrices with {} and {} classes",
                self.num_classes, other.num_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Per-class IoU (`None` where the union is empty) and the mean over
    /// classes with a non-empty union, optionally restricted to `subset`.
    pub fn miou(&self, subset: Option<&[usize]>) -> (Vec<Option<f64>>, f64) {
        let c = self.num_classes;
        let per_class: Vec<Option<f64>> = (0..c)
            .map(|k| {
                let tp = self.get(k, k);
                let fn_: u64 = (0..c).map(|p| self.get(k, p)).sum::<u64>() - tp;
                let fp: u64 = (0..c).map(|g| self.get(g, k)).sum::<u64>() - tp;
                let union = tp + fp + fn_;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect();
        let included: Vec<f64> = match subset {
            Some(s) => s.iter().filter_map(|&k| per_class.get(k).copied().flatten()).collect(),
            None => per_class.iter().filter_map(|v| *v).collect(),
        };
        let mean = if included.is_empty() {
            0.0
        } else {
            included.iter().sum::<f64>() / included.len() as f64
        };
        (per_class, mean)
    }
}

/// Free-function forms.
pub fn accumulate(mut cm: ConfusionMatrix, pred: &Array2<u8>, gt: &Array2<u8>, ignore_index: u8) -> Result<ConfusionMatrix> {
    cm.accumulate(pred, gt, ignore_index)?;
    Ok(cm)
}

pub fn miou(cm: &ConfusionMatrix, subset: Option<&[usize]>) -> (Vec<Option<f64>>, f64) {
    cm.miou(subset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction_fills_diagonal() {
        let gt = Array2::from_shape_fn((10, 10), |(i, j)| ((i + j) % 3) as u8);
        let cm = accumulate(ConfusionMatrix::new(3), &gt, &gt, 255).unwrap();
        assert_eq!(cm.diagonal_sum(), 100);
        let (iou, mean) = cm.miou(None);
        assert!(iou.iter().all(|v| *v == Some(1.0)));
        assert_eq!(mean, 1.0);
    }

    #[test]
    fn all_ignored_leaves_matrix_unchanged() {
        let gt = Array2::from_elem((4, 4), 255u8);
        let pred = Array2::zeros((4, 4));
        let cm = accumulate(ConfusionMatrix::new(3), &pred, &gt, 255).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(3));
    }

    #[test]
    fn hand_counted_two_by_two() {
        let pred = array![[0u8, 0], [1, 1]];
        let gt = array![[0u8, 1], [1, 1]];
        let cm = accumulate(ConfusionMatrix::new(2), &pred, &gt, 255).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 0], vec![1, 2]]);
        let (iou, mean) = cm.miou(None);
        assert_eq!(iou, vec![Some(0.5), Some(2.0 / 3.0)]);
        assert!((mean - 0.583_333_333).abs() < 1e-8);
    }

    #[test]
    fn zero_union_classes_are_skipped_and_subset_restricts() {
        let cm = ConfusionMatrix::from_counts(&[vec![3, 1, 0], vec![0, 0, 0], vec![0, 1, 1]]).unwrap();
        let (iou, mean) = cm.miou(None);
        assert_eq!(iou[0], Some(0.75));
        assert_eq!(iou[1], Some(0.0));
        assert_eq!(iou[2], Some(0.5));
        assert!((mean - 1.25 / 3.0).abs() < 1e-12);
        let (_, sub) = cm.miou(Some(&[0, 2]));
        assert!((sub - 0.625).abs() < 1e-12);
        let empty = ConfusionMatrix::from_counts(&[vec![2, 0], vec![0, 0]]).unwrap();
        assert_eq!(empty.miou(None), (vec![Some(1.0), None], 1.0));
    }

    #[test]
    fn out_of_range_labels_are_rejected_atomically() {
        let mut cm = ConfusionMatrix::new(2);
        let gt = array![[0u8, 5]];
        let pred = array![[0u8, 0]];
        assert!(matches!(cm.accumulate(&pred, &gt, 255), Err(Error::InvalidInput(_))));
        assert_eq!(cm.total(), 0);
        let gt = array![[0u8, 1]];
        let pred = array![[0u8, 2]];
        assert!(cm.accumulate(&pred, &gt, 255).is_err());
        assert!(cm.accumulate(&array![[0u8]], &gt, 255).is_err());
    }

    fn maps(c: u8) -> impl Strategy<Value = (Array2<u8>, Array2<u8>)> {
        let cell = prop_oneof![4 => 0..c, 1 => Just(255u8)];
        (
            proptest::collection::vec(0..c, 36),
            proptest::collection::vec(cell, 36),
        )
            .prop_map(|(p, g)| {
                (
                    Array2::from_shape_vec((6, 6), p).unwrap(),
                    Array2::from_shape_vec((6, 6), g).unwrap(),
                )
            })
    }

    proptest! {
        #[test]
        fn accumulate_is_additive(a in maps(4), b in maps(4)) {
            let mut both = accumulate(ConfusionMatrix::new(4), &a.0, &a.1, 255).unwrap();
            both.accumulate(&b.0, &b.1, 255).unwrap();
            let mut merged = accumulate(ConfusionMatrix::new(4), &a.0, &a.1, 255).unwrap();
            merged.merge(&accumulate(ConfusionMatrix::new(4), &b.0, &b.1, 255).unwrap()).unwrap();
            prop_assert_eq!(both, merged);
        }

        #[test]
        fn miou_invariant_under_class_permutation(m in maps(4), perm in Just(vec![0u8, 1, 2, 3]).prop_shuffle()) {
            let relabel = |x: &Array2<u8>| x.mapv(|v| if v == 255 { 255 } else { perm[v as usize] });
            let cm = accumulate(ConfusionMatrix::new(4), &m.0, &m.1, 255).unwrap();
            let pm = accumulate(ConfusionMatrix::new(4), &relabel(&m.0), &relabel(&m.1), 255).unwrap();
            let subset = [0usize, 2];
            let psubset: Vec<usize> = subset.iter().map(|&k| perm[k] as usize).collect();
            prop_assert!((cm.miou(None).1 - pm.miou(None).1).abs() < 1e-12);
            prop_assert!((cm.miou(Some(&subset)).1 - pm.miou(Some(&psubset)).1).abs() < 1e-12);
        }

        #[test]
        fn total_counts_non_ignored_pixels(m in maps(3)) {
            let cm = accumulate(ConfusionMatrix::new(3), &m.0, &m.1, 255).unwrap();
            prop_assert_eq!(cm.total() as usize, m.1.iter().filter(|&&g| g != 255).count());
        }
    }
}
