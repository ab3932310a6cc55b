//! Domain types shared by every stage of the pipeline.

use std::collections::HashSet;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// One scene. Images are stored channel-last in `[-1, 1]`, depth in meters.
///
/// Target samples may carry labels, but those are only handed out through
/// [`Sample::eval_labels`]; [`Sample::train_labels`] never exposes them.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub domain: Domain,
    pub image: Array3<f32>,
    pub depth: Option<Array2<f32>>,
    pub labels: Option<Array2<u8>>,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        domain: Domain,
        image: Array3<f32>,
        depth: Option<Array2<f32>>,
        labels: Option<Array2<u8>>,
    ) -> Result<Self> {
        let sample = Sample {
            id: id.into(),
            domain,
            image,
            depth,
            labels,
        };
        sample.check_shapes()?;
        Ok(sample)
    }

    pub fn height(&self) -> usize {
        self.image.dim().0
    }

    pub fn width(&self) -> usize {
        self.image.dim().1
    }

    pub fn train_labels(&self) -> Option<&Array2<u8>> {
        match self.domain {
            Domain::Source => self.labels.as_ref(),
            Domain::Target => None,
        }
    }

    pub fn train_depth(&self) -> Option<&Array2<f32>> {
        match self.domain {
            Domain::Source => self.depth.as_ref(),
            Domain::Target => None,
        }
    }

    pub fn eval_labels(&self) -> Option<&Array2<u8>> {
        self.labels.as_ref()
    }

    fn check_shapes(&self) -> Result<()> {
        let (h, w, c) = self.image.dim();
        if c != 3 {
            return Err(Error::shape(
                format!("image channels of `{}`", self.id),
                3,
                c,
            ));
        }
        if let Some(d) = &self.depth {
            if d.dim() != (h, w) {
                return Err(Error::shape(
                    format!("depth of `{}`", self.id),
                    format!("{h}x{w}"),
                    format!("{}x{}", d.nrows(), d.ncols()),
                ));
            }
        }
        if let Some(l) = &self.labels {
            if l.dim() != (h, w) {
                return Err(Error::shape(
                    format!("labels of `{}`", self.id),
                    format!("{h}x{w}"),
                    format!("{}x{}", l.nrows(), l.ncols()),
                ));
            }
        }
        Ok(())
    }

    /// Full invariant check: shapes, value ranges and label validity.
    pub fn validate(&self, classes: &ClassSet) -> Result<()> {
        self.check_shapes()?;
        if let Some(v) = self.image.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "image value {v} of `{}` outside [-1, 1]",
                self.id
            )));
        }
        if let Some(d) = &self.depth {
            if let Some(v) = d.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "depth value {v} of `{}` is negative or non-finite",
                    self.id
                )));
            }
        }
        if let Some(l) = &self.labels {
            for &v in l.iter() {
                classes.check_label(v)?;
            }
        }
        Ok(())
    }
}

/// Maps an 8-bit channel value to `[-1, 1]` (mean 0.5, scale 0.5).
#[inline]
pub fn preprocess_channel(v: u8) -> f32 {
    (v as f32 / 255.0 - 0.5) / 0.5
}

/// Inverse of [`preprocess_channel`], clamped and rounded to 8 bits.
#[inline]
pub fn deprocess_channel(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) * 0.5 + 0.5) * 255.0).round() as u8
}

/// Trade-off weights of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_depth: f64,
    pub lambda_image: f64,
    pub lambda_output: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_depth: 0.1,
            lambda_image: 0.1,
            lambda_output: 0.001,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_depth", self.lambda_depth),
            ("lambda_image", self.lambda_image),
            ("lambda_output", self.lambda_output),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("weights.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Min-max depth normalization bounds in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthNormalizer {
    pub d_min: f32,
    pub d_max: f32,
}

impl DepthNormalizer {
    /// 16-bit centimeter storage ceiling.
    pub const VKITTI: DepthNormalizer = DepthNormalizer {
        d_min: 0.0,
        d_max: 655.35,
    };
    pub const TOY: DepthNormalizer = DepthNormalizer {
        d_min: 0.0,
        d_max: 100.0,
    };

    pub fn new(d_min: f32, d_max: f32) -> Result<Self> {
        let n = DepthNormalizer { d_min, d_max };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_min >= 0.0 && self.d_min < self.d_max && self.d_max.is_finite()) {
            return Err(Error::Config(format!(
                "depth normalizer requires 0 <= d_min < d_max, got d_min={} d_max={}",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn normalize(&self, d: f32) -> f32 {
        let (lo, hi) = (self.d_min as f64, self.d_max as f64);
        ((d as f64 - lo) / (hi - lo)).clamp(0.0, 1.0) as f32
    }

    #[inline]
    pub fn denormalize(&self, v: f32) -> f32 {
        let (lo, hi) = (self.d_min as f64, self.d_max as f64);
        (lo + v as f64 * (hi - lo)) as f32
    }
}

impl Default for DepthNormalizer {
    fn default() -> Self {
        DepthNormalizer::TOY
    }
}

/// Ordered class taxonomy with display palette and ignore convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSet {
    pub names: Vec<String>,
    pub palette: Vec<[u8; 3]>,
    #[serde(default = "default_ignore")]
    pub ignore_index: u8,
    #[serde(default)]
    pub eval_subset: Option<Vec<usize>>,
}

fn default_ignore() -> u8 {
    255
}

impl ClassSet {
    pub fn new(names: Vec<String>, palette: Vec<[u8; 3]>, ignore_index: u8) -> Result<Self> {
        let cs = ClassSet {
            names,
            palette,
            ignore_index,
            eval_subset: None,
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn with_eval_subset(mut self, subset: Vec<usize>) -> Result<Self> {
        self.eval_subset = Some(subset);
        self.validate()?;
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.names.len();
        if c < 2 {
            return Err(Error::Config(format!("class set needs at least 2 classes, got {c}")));
        }
        let mut seen = HashSet::new();
        for n in &self.names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("duplicate class name `{n}`")));
            }
        }
        if self.palette.len() != c {
            return Err(Error::Config(format!(
                "palette has {} entries for {c} classes",
                self.palette.len()
            )));
        }
        if (self.ignore_index as usize) < c {
            return Err(Error::Config(format!(
                "ignore_index {} collides with a class index (C = {c})",
                self.ignore_index
            )));
        }
        if let Some(subset) = &self.eval_subset {
            if let Some(bad) = subset.iter().find(|&&i| i >= c) {
                return Err(Error::Config(format!("eval_subset index {bad} >= C = {c}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn check_label(&self, v: u8) -> Result<()> {
        if (v as usize) < self.num_classes() || v == self.ignore_index {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "label value {v} outside 0..{} and not the ignore index {}",
                self.num_classes(),
                self.ignore_index
            )))
        }
    }

    /// Classes of the procedural toy benchmark.
    pub fn toy() -> Self {
        Self::from_static(&[
            ("sky", [70, 130, 180]),
            ("road", [128, 64, 128]),
            ("building", [70, 70, 70]),
            ("obstacle", [0, 0, 142]),
        ])
    }

    /// The 10 categories shared by Virtual KITTI and KITTI.
    pub fn vkitti10() -> Self {
        Self::from_static(&[
            ("road", [128, 64, 128]),
            ("building", [70, 70, 70]),
            ("pole", [153, 153, 153]),
            ("traffic light", [250, 170, 30]),
            ("traffic sign", [220, 220, 0]),
            ("vegetation", [107, 142, 35]),
            ("terrain", [152, 251, 152]),
            ("sky", [70, 130, 180]),
            ("car", [0, 0, 142]),
            ("truck", [0, 0, 70]),
        ])
    }

    /// The 16 SYNTHIA/Cityscapes categories; the 13-class subset leaves out
    /// wall, fence and pole.
    pub fn synthia16() -> Self {
        let cs = Self::from_static(&[
            ("road", [128, 64, 128]),
            ("sidewalk", [244, 35, 232]),
            ("building", [70, 70, 70]),
            ("wall", [102, 102, 156]),
            ("fence", [190, 153, 153]),
            ("pole", [153, 153, 153]),
            ("traffic light", [250, 170, 30]),
            ("traffic sign", [220, 220, 0]),
            ("vegetation", [107, 142, 35]),
            ("sky", [70, 130, 180]),
            ("person", [220, 20, 60]),
            ("rider", [255, 0, 0]),
            ("car", [0, 0, 142]),
            ("bus", [0, 60, 100]),
            ("motorbike", [0, 0, 230]),
            ("bicycle", [119, 11, 32]),
        ]);
        let subset = (0..16).filter(|i| !matches!(i, 3..=5)).collect();
        cs.with_eval_subset(subset).expect("static class set")
    }

    /// Names the classes excluded from the subset mean (rendered with `*`).
    pub fn is_excluded(&self, class: usize) -> bool {
        self.eval_subset
            .as_ref()
            .is_some_and(|s| !s.contains(&class))
    }

    fn from_static(entries: &[(&str, [u8; 3])]) -> Self {
        ClassSet {
            names: entries.iter().map(|(n, _)| n.to_string()).collect(),
            palette: entries.iter().map(|(_, c)| *c).collect(),
            ignore_index: 255,
            eval_subset: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!((w.lambda_depth, w.lambda_image, w.lambda_output), (0.1, 0.1, 0.001));
        assert!(w.validate().is_ok());
        let bad = LossWeights {
            lambda_image: -1.0,
            ..w
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn builtin_class_sets_are_valid() {
        for cs in [ClassSet::toy(), ClassSet::vkitti10(), ClassSet::synthia16()] {
            cs.validate().unwrap();
        }
        let s = ClassSet::synthia16();
        assert_eq!(s.eval_subset.as_ref().unwrap().len(), 13);
        assert!(s.is_excluded(s.index_of("pole").unwrap()));
        assert!(!s.is_excluded(s.index_of("road").unwrap()));
    }

    #[test]
    fn class_set_rejects_bad_definitions() {
        let names = vec!["a".to_string(), "a".to_string()];
        assert!(ClassSet::new(names, vec![[0; 3]; 2], 255).is_err());
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(ClassSet::new(names.clone(), vec![[0; 3]; 1], 255).is_err());
        assert!(ClassSet::new(names, vec![[0; 3]; 2], 1).is_err());
    }

    #[test]
    fn normalizer_bounds() {
        assert!(DepthNormalizer::new(5.0, 5.0).is_err());
        assert!(DepthNormalizer::new(-1.0, 5.0).is_err());
        let n = DepthNormalizer::new(0.0, 100.0).unwrap();
        assert_eq!(n.normalize(0.0), 0.0);
        assert_eq!(n.normalize(100.0), 1.0);
        assert_eq!(n.normalize(25.0), 0.25);
        assert_eq!(n.normalize(250.0), 1.0);
    }

    #[test]
    fn preprocessing_round_trips_bytes() {
        for v in 0..=255u8 {
            let p = preprocess_channel(v);
            assert!((-1.0..=1.0).contains(&p));
            assert_eq!(deprocess_channel(p), v);
        }
    }

    #[test]
    fn target_labels_are_eval_only() {
        let img = Array3::zeros((2, 2, 3));
        let labels = Array2::zeros((2, 2));
        let s = Sample::new("t", Domain::Target, img, None, Some(labels)).unwrap();
        assert!(s.train_labels().is_none());
        assert!(s.eval_labels().is_some());
    }

    #[test]
    fn sample_shape_mismatch_is_rejected() {
        let img = Array3::zeros((2, 2, 3));
        let labels = Array2::zeros((2, 3));
        assert!(Sample::new("s", Domain::Source, img, None, Some(labels)).is_err());
    }
}
