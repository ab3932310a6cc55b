//! Label/depth encodings and conversion into network input tensors.

use candle_core::{DType, Device, Tensor};
use ndarray::{s, Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::types::{DepthNormalizer, Domain, Sample};

/// Per-pixel one-hot encoding; ignored pixels become the all-zero vector.
pub fn one_hot(labels: &Array2<u8>, num_classes: usize, ignore_index: u8) -> Result<Array3<f32>> {
    let (h, w) = labels.dim();
    let mut out = Array3::<f32>::zeros((h, w, num_classes));
    for ((r, c), &v) in labels.indexed_iter() {
        if v == ignore_index {
            continue;
        }
        if v as usize >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label value {v} at ({r}, {c}) outside 0..{num_classes} and not ignore index {ignore_index}"
            )));
        }
        out[[r, c, v as usize]] = 1.0;
    }
    Ok(out)
}

/// Channel-wise argmax; all-zero vectors map to `ignore_index`.
pub fn argmax_channels(x: &Array3<f32>, ignore_index: u8) -> Array2<u8> {
    let (h, w, _) = x.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let px = x.slice(s![r, c, ..]);
        let mut best = None;
        let mut best_v = f32::NEG_INFINITY;
        for (k, &v) in px.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = Some(k);
            }
        }
        match best {
            Some(k) if best_v > 0.0 || px.iter().any(|&v| v != 0.0) => k as u8,
            _ => ignore_index,
        }
    })
}

pub fn normalize_depth(depth: &Array2<f32>, norm: &DepthNormalizer) -> Result<Array2<f32>> {
    norm.validate()?;
    if let Some(v) = depth.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!("depth value {v} is negative or non-finite")));
    }
    Ok(depth.mapv(|d| norm.normalize(d)))
}

pub fn denormalize_depth(depth: &Array2<f32>, norm: &DepthNormalizer) -> Array2<f32> {
    depth.mapv(|v| norm.denormalize(v))
}

/// Channel-stacked transform-network input: image (3), one-hot labels (C),
/// normalized depth (1).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub channels: Array3<f32>,
    pub num_classes: usize,
}

impl EncodedInput {
    pub fn num_channels(&self) -> usize {
        self.channels.dim().2
    }

    pub fn image(&self) -> Array3<f32> {
        self.channels.slice(s![.., .., 0..3]).to_owned()
    }

    pub fn semantics(&self) -> Array3<f32> {
        self.channels
            .slice(s![.., .., 3..3 + self.num_classes])
            .to_owned()
    }

    pub fn depth(&self) -> Array2<f32> {
        self.channels
            .index_axis(Axis(2), 3 + self.num_classes)
            .to_owned()
    }

    /// Keeps the image plus the requested auxiliary planes, in canonical order.
    pub fn select(&self, semantics: bool, depth: bool) -> Array3<f32> {
        let c = self.num_classes;
        let mut idx: Vec<usize> = (0..3).collect();
        if semantics {
            idx.extend(3..3 + c);
        }
        if depth {
            idx.push(3 + c);
        }
        self.channels.select(Axis(2), &idx)
    }
}

pub fn encode_input(sample: &Sample, num_classes: usize, ignore_index: u8, norm: &DepthNormalizer) -> Result<EncodedInput> {
    if sample.domain != Domain::Source {
        return Err(Error::Precondition(format!(
            "encode_input needs a source sample, `{}` is target",
            sample.id
        )));
    }
    let labels = sample.train_labels().ok_or_else(|| {
        Error::Precondition(format!("source sample `{}` has no labels", sample.id))
    })?;
    let depth = sample.train_depth().ok_or_else(|| {
        Error::Precondition(format!("source sample `{}` has no depth", sample.id))
    })?;
    let (h, w) = (sample.height(), sample.width());
    let hot = one_hot(labels, num_classes, ignore_index)?;
    let nd = normalize_depth(depth, norm)?;

    let mut channels = Array3::<f32>::zeros((h, w, 3 + num_classes + 1));
    channels.slice_mut(s![.., .., 0..3]).assign(&sample.image);
    channels
        .slice_mut(s![.., .., 3..3 + num_classes])
        .assign(&hot);
    channels
        .index_axis_mut(Axis(2), 3 + num_classes)
        .assign(&nd);
    Ok(EncodedInput {
        channels,
        num_classes,
    })
}

/// H×W×K (channel-last) → 1×K×H×W tensor.
pub fn hwc_to_tensor(x: &Array3<f32>, dtype: DType, device: &Device) -> Result<Tensor> {
    let (h, w, k) = x.dim();
    let chw = x.view().permuted_axes([2, 0, 1]);
    let data: Vec<f32> = chw.iter().copied().collect();
    Ok(Tensor::from_vec(data, (1, k, h, w), device)?.to_dtype(dtype)?)
}

pub fn hw_to_tensor(x: &Array2<f32>, dtype: DType, device: &Device) -> Result<Tensor> {
    let (h, w) = x.dim();
    let data: Vec<f32> = x.iter().copied().collect();
    Ok(Tensor::from_vec(data, (1, 1, h, w), device)?.to_dtype(dtype)?)
}

/// 1×K×H×W tensor → H×W×K array.
pub fn tensor_to_hwc(t: &Tensor) -> Result<Array3<f32>> {
    let (n, k, h, w) = t.dims4()?;
    if n != 1 {
        return Err(Error::shape("batch dimension", 1, n));
    }
    let data = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    let chw = Array3::from_shape_vec((k, h, w), data)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(chw.permuted_axes([1, 2, 0]).as_standard_layout().to_owned())
}

/// Segmentation targets as an ignore-aware one-hot tensor 1×C×H×W.
pub fn labels_to_onehot_tensor(
    labels: &Array2<u8>,
    num_classes: usize,
    ignore_index: u8,
    dtype: DType,
    device: &Device,
) -> Result<Tensor> {
    hwc_to_tensor(&one_hot(labels, num_classes, ignore_index)?, dtype, device)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn one_hot_single_pixel() {
        let l = array![[1u8]];
        let h = one_hot(&l, 3, 255).unwrap();
        assert_eq!(h.as_slice().unwrap(), &[0.0, 1.0, 0.0]);
        let l = array![[255u8]];
        let h = one_hot(&l, 3, 255).unwrap();
        assert_eq!(h.as_slice().unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn one_hot_channel_sums() {
        let l = array![[0u8, 1], [1, 0]];
        let h = one_hot(&l, 2, 255).unwrap();
        // brute force: count per channel, check per-pixel sum
        let mut sums = [0.0f32; 2];
        for r in 0..2 {
            for c in 0..2 {
                let mut px = 0.0;
                for k in 0..2 {
                    sums[k] += h[[r, c, k]];
                    px += h[[r, c, k]];
                }
                assert_eq!(px, 1.0);
            }
        }
        assert_eq!(sums, [2.0, 2.0]);
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        let l = array![[0u8, 7]];
        let err = one_hot(&l, 3, 255).unwrap_err().to_string();
        assert!(err.contains('7'), "{err}");
    }

    #[test]
    fn normalize_examples() {
        let n = DepthNormalizer::new(0.0, 100.0).unwrap();
        let d = array![[0.0f32, 100.0, 25.0]];
        let out = normalize_depth(&d, &n).unwrap();
        assert_eq!(out, array![[0.0f32, 1.0, 0.25]]);
        let bad = DepthNormalizer {
            d_min: 10.0,
            d_max: 1.0,
        };
        assert!(matches!(normalize_depth(&d, &bad), Err(Error::Config(_))));
    }

    fn source(h: usize, w: usize, label: u8, depth: f32) -> Sample {
        Sample::new(
            "s",
            Domain::Source,
            Array3::zeros((h, w, 3)),
            Some(Array2::from_elem((h, w), depth)),
            Some(Array2::from_elem((h, w), label)),
        )
        .unwrap()
    }

    #[test]
    fn encode_channel_counts() {
        let s = source(2, 3, 0, 1.0);
        let norm = DepthNormalizer::TOY;
        assert_eq!(encode_input(&s, 10, 255, &norm).unwrap().num_channels(), 14);
        assert_eq!(encode_input(&s, 16, 255, &norm).unwrap().num_channels(), 20);
    }

    #[test]
    fn encode_direct_construction() {
        let norm = DepthNormalizer::new(0.0, 1.0).unwrap();
        let s = source(4, 4, 6, 0.5);
        let e = encode_input(&s, 10, 255, &norm).unwrap();
        for k in 0..14 {
            let plane = e.channels.index_axis(Axis(2), k);
            let expect = match k {
                0..=2 => 0.0,
                9 => 1.0, // 3 + label 6
                13 => 0.5,
                _ => 0.0,
            };
            assert!(plane.iter().all(|&v| v == expect), "channel {k}");
        }
        assert_eq!(e.select(false, false).dim().2, 3);
        assert_eq!(e.select(false, true).dim().2, 4);
        assert_eq!(e.select(true, false).dim().2, 13);
    }

    #[test]
    fn encode_requires_source_annotations() {
        let mut s = source(2, 2, 0, 1.0);
        s.depth = None;
        assert!(matches!(
            encode_input(&s, 3, 255, &DepthNormalizer::TOY),
            Err(Error::Precondition(_))
        ));
        let t = Sample::new("t", Domain::Target, Array3::zeros((2, 2, 3)), None, None).unwrap();
        assert!(encode_input(&t, 3, 255, &DepthNormalizer::TOY).is_err());
    }

    #[test]
    fn tensor_layout_round_trip() {
        let x = Array3::from_shape_fn((2, 3, 4), |(r, c, k)| (r * 100 + c * 10 + k) as f32);
        let t = hwc_to_tensor(&x, DType::F32, &Device::Cpu).unwrap();
        assert_eq!(t.dims(), &[1, 4, 2, 3]);
        assert_eq!(tensor_to_hwc(&t).unwrap(), x);
    }

    proptest! {
        #[test]
        fn argmax_inverts_one_hot(c in 1usize..12, cells in proptest::collection::vec(0u8..=12, 1..64)) {
            let labels: Vec<u8> = cells.iter().map(|&v| if v as usize >= c { 255 } else { v }).collect();
            let l = Array2::from_shape_vec((1, labels.len()), labels).unwrap();
            let h = one_hot(&l, c, 255).unwrap();
            prop_assert_eq!(argmax_channels(&h, 255), l);
        }

        #[test]
        fn normalize_monotone_and_invertible(a in 0.0f32..200.0, b in 0.0f32..200.0) {
            let n = DepthNormalizer::new(3.0, 150.0).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(n.normalize(lo) <= n.normalize(hi));
            if (3.0..=150.0).contains(&a) {
                let back = n.denormalize(n.normalize(a));
                prop_assert!((back - a).abs() <= 1e-6 * a.abs());
            }
        }

        #[test]
        fn encoded_channel_count(c in 1usize..20) {
            let s = source(2, 2, 0, 1.0);
            let e = encode_input(&s, c, 255, &DepthNormalizer::TOY).unwrap();
            prop_assert_eq!(e.num_channels(), 3 + c + 1);
        }
    }
}
