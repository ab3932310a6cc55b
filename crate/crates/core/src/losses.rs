//! Supervised task losses, adversarial losses and the generator objective.
//!
//! Every loss takes and returns candle tensors so that it participates in
//! backpropagation; [`LossReport`] holds the detached scalar values.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::LossWeights;

/// Which adversarial objective the generator side uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanLoss {
    /// Generator minimizes `-log σ(D(fake))`.
    #[default]
    Nonsaturating,
    /// Generator minimizes `log(1 - σ(D(fake)))`, the literal min-max form.
    Minimax,
    LeastSquares,
}

/// A scalar loss tensor plus a flag raised when no pixel contributed.
#[derive(Debug, Clone)]
pub struct Term {
    pub loss: Tensor,
    pub empty: bool,
}

impl Term {
    pub fn value(&self) -> Result<f64> {
        Ok(self.loss.to_dtype(DType::F64)?.to_scalar::<f64>()?)
    }
}

/// `log(1 + exp(x))`, stable for large |x|.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

/// Mean per-pixel cross-entropy over non-ignored pixels.
///
/// `target` is the ignore-aware one-hot encoding of the labels (1×C×H×W):
/// ignored pixels are all-zero and drop out of both numerator and count.
pub fn seg_loss(logits: &Tensor, target: &Tensor) -> Result<Term> {
    if logits.dims() != target.dims() {
        return Err(Error::shape(
            "segmentation loss",
            format!("{:?}", target.dims()),
            format!("{:?}", logits.dims()),
        ));
    }
    check_finite(logits, "segmentation logits")?;
    let valid = target.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if valid == 0.0 {
        return Ok(Term {
            loss: logits.zeros_like()?.sum_all()?,
            empty: true,
        });
    }
    let logp = candle_nn::ops::log_softmax(logits, 1)?;
    let nll = (target * logp)?.sum_all()?.neg()?;
    Ok(Term {
        loss: (nll / valid)?,
        empty: false,
    })
}

/// Mean absolute error over pixels where `mask` is 1 (all pixels if `None`).
pub fn depth_loss(pred: &Tensor, gt: &Tensor, mask: Option<&Tensor>) -> Result<Term> {
    if pred.dims() != gt.dims() {
        return Err(Error::shape(
            "depth loss",
            format!("{:?}", gt.dims()),
            format!("{:?}", pred.dims()),
        ));
    }
    let err = (pred - gt)?.abs()?;
    let (err, count) = match mask {
        Some(m) => {
            let n = m.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            ((err * m)?, n)
        }
        None => (err, pred.elem_count() as f64),
    };
    if count == 0.0 {
        return Ok(Term {
            loss: pred.zeros_like()?.sum_all()?,
            empty: true,
        });
    }
    Ok(Term {
        loss: (err.sum_all()? / count)?,
        empty: false,
    })
}

/// Discriminator loss on raw score maps; "real" scores should go up, "fake"
/// scores down. Spatial positions are averaged.
pub fn adv_disc_loss(real: &Tensor, fake: &Tensor, mode: GanLoss) -> Result<Tensor> {
    Ok(match mode {
        GanLoss::Nonsaturating | GanLoss::Minimax => {
            (softplus(&real.neg()?)?.mean_all()? + softplus(fake)?.mean_all()?)?
        }
        GanLoss::LeastSquares => {
            let r = (real - 1.0)?.sqr()?.mean_all()?;
            let f = fake.sqr()?.mean_all()?;
            ((r + f)? * 0.5)?
        }
    })
}

/// Generator loss on the scores of generated samples.
pub fn adv_gen_loss(fake: &Tensor, mode: GanLoss) -> Result<Tensor> {
    Ok(match mode {
        GanLoss::Nonsaturating => softplus(&fake.neg()?)?.mean_all()?,
        GanLoss::Minimax => softplus(fake)?.mean_all()?.neg()?,
        GanLoss::LeastSquares => ((fake - 1.0)?.sqr()?.mean_all()? * 0.5)?,
    })
}

/// Generator loss when both score maps depend on the generator: the "fake"
/// side is pushed towards real and the "real" side towards fake.
pub fn adv_gen_loss_swapped(fake: &Tensor, real: &Tensor, mode: GanLoss) -> Result<Tensor> {
    let toward_fake = match mode {
        GanLoss::Nonsaturating => softplus(real)?.mean_all()?,
        GanLoss::Minimax => softplus(&real.neg()?)?.mean_all()?.neg()?,
        GanLoss::LeastSquares => (real.sqr()?.mean_all()? * 0.5)?,
    };
    Ok((adv_gen_loss(fake, mode)? + toward_fake)?)
}

/// Joint output map: per-pixel class probabilities (C) followed by depth (1).
pub fn output_concat(seg_logits: &Tensor, depth: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = seg_logits.dims4()?;
    let (_, dc, dh, dw) = depth.dims4()?;
    if (dc, dh, dw) != (1, h, w) {
        return Err(Error::shape(
            "depth map for output concatenation",
            format!("1x{h}x{w}"),
            format!("{dc}x{dh}x{dw}"),
        ));
    }
    let prob = candle_nn::ops::softmax(seg_logits, 1)?;
    Ok(Tensor::cat(&[&prob, depth], 1)?)
}

/// Scalar values of every loss term of one training step. Adversarial terms
/// are `None` when the corresponding component is disabled.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub seg: f64,
    pub depth: Option<f64>,
    pub adv_image_g: Option<f64>,
    pub adv_image_d: Option<f64>,
    pub adv_output_g: Option<f64>,
    pub adv_output_d: Option<f64>,
    pub total_g: f64,
}

impl LossReport {
    /// Recomputes the weighted generator objective from the stored parts.
    pub fn recombined_total(&self, w: &LossWeights) -> f64 {
        total_generator_loss(
            &GeneratorParts {
                seg: self.seg,
                depth: self.depth.unwrap_or(0.0),
                adv_image: self.adv_image_g.unwrap_or(0.0),
                adv_output: self.adv_output_g.unwrap_or(0.0),
            },
            w,
        )
    }

    pub fn is_finite(&self) -> std::result::Result<(), &'static str> {
        let terms = [
            ("seg", Some(self.seg)),
            ("depth", self.depth),
            ("adv_image_g", self.adv_image_g),
            ("adv_image_d", self.adv_image_d),
            ("adv_output_g", self.adv_output_g),
            ("adv_output_d", self.adv_output_d),
            ("total_g", Some(self.total_g)),
        ];
        for (name, v) in terms {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(name);
            }
        }
        Ok(())
    }
}

/// Generator-side loss parts before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneratorParts {
    pub seg: f64,
    pub depth: f64,
    pub adv_image: f64,
    pub adv_output: f64,
}

pub fn total_generator_loss(p: &GeneratorParts, w: &LossWeights) -> f64 {
    p.seg + w.lambda_depth * p.depth + w.lambda_image * p.adv_image + w.lambda_output * p.adv_output
}

/// Tensor form of [`total_generator_loss`]; missing terms count as zero.
pub fn total_generator_tensor(
    seg: &Tensor,
    depth: Option<&Tensor>,
    adv_image: Option<&Tensor>,
    adv_output: Option<&Tensor>,
    w: &LossWeights,
) -> Result<Tensor> {
    let mut total = seg.clone();
    for (t, lambda) in [
        (depth, w.lambda_depth),
        (adv_image, w.lambda_image),
        (adv_output, w.lambda_output),
    ] {
        if let Some(t) = t {
            total = (total + (t * lambda)?)?;
        }
    }
    Ok(total)
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    // sum of |x| is non-finite iff some entry is NaN or infinite
    let s = t.abs()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if s.is_finite() {
        Ok(())
    } else {
        let any_nan = t
            .flatten_all()?
            .to_dtype(DType::F64)?
            .to_vec1::<f64>()?
            .iter()
            .any(|v| v.is_nan());
        Err(Error::Numeric(format!(
            "{what} contain {}",
            if any_nan { "NaN" } else { "infinite values" }
        )))
    }
}

/// Per-pixel class probabilities (1×C×H×W).
pub fn class_probabilities(seg_logits: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::softmax(seg_logits, 1)?)
}

/// Per-pixel argmax over classes of a 1×C×H×W tensor.
pub fn predict_labels(seg_logits: &Tensor) -> Result<ndarray::Array2<u8>> {
    let (_, _, h, w) = seg_logits.dims4()?;
    let idx = seg_logits
        .argmax_keepdim(1)?
        .flatten_all()?
        .to_vec1::<u32>()?;
    ndarray::Array2::from_shape_vec((h, w), idx.into_iter().map(|v| v as u8).collect())
        .map_err(|e| Error::Numeric(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn t(v: &[f64], shape: (usize, usize, usize, usize)) -> Tensor {
        Tensor::from_vec(v.to_vec(), shape, &Device::Cpu).unwrap()
    }

    fn scalar(t: &Tensor) -> f64 {
        t.to_scalar::<f64>().unwrap()
    }

    #[test]
    fn seg_uniform_is_ln_c() {
        let logits = Tensor::zeros((1, 4, 3, 5), DType::F64, &Device::Cpu).unwrap();
        let mut target = vec![0.0; 4 * 15];
        for p in 0..15 {
            target[(p % 4) * 15 + p] = 1.0;
        }
        let target = t(&target, (1, 4, 3, 5));
        let l = seg_loss(&logits, &target).unwrap();
        assert!((l.value().unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn seg_hand_evaluated_pair() {
        // pixel 0 logits (2,0), pixel 1 logits (0,2); both labelled 0
        let logits = t(&[2.0, 0.0, 0.0, 2.0], (1, 2, 2, 1));
        let target = t(&[1.0, 1.0, 0.0, 0.0], (1, 2, 2, 1));
        let v = seg_loss(&logits, &target).unwrap().value().unwrap();
        let ce0 = (1.0 + (-2f64).exp()).ln();
        let ce1 = 2.0 + ce0;
        assert!((ce0 - 0.126928).abs() < 1e-6);
        assert!((v - (ce0 + ce1) / 2.0).abs() < 1e-12);
        assert!((v - 1.126928).abs() < 1e-6);
    }

    #[test]
    fn seg_large_margin_and_all_ignored() {
        let logits = t(&[50.0, 0.0], (1, 2, 1, 1));
        let target = t(&[1.0, 0.0], (1, 2, 1, 1));
        assert!(seg_loss(&logits, &target).unwrap().value().unwrap() < 1e-6);
        let none = t(&[0.0, 0.0], (1, 2, 1, 1));
        let l = seg_loss(&logits, &none).unwrap();
        assert!(l.empty);
        assert_eq!(l.value().unwrap(), 0.0);
    }

    #[test]
    fn seg_nan_is_numeric_error() {
        let logits = t(&[f64::NAN, 0.0], (1, 2, 1, 1));
        let target = t(&[1.0, 0.0], (1, 2, 1, 1));
        assert!(matches!(seg_loss(&logits, &target), Err(Error::Numeric(_))));
    }

    #[test]
    fn depth_examples() {
        let gt = t(&[0.5, 0.5], (1, 1, 1, 2));
        assert_eq!(scalar(&depth_loss(&gt, &gt, None).unwrap().loss), 0.0);
        let pred = t(&[0.2, 0.8], (1, 1, 1, 2));
        assert!((scalar(&depth_loss(&pred, &gt, None).unwrap().loss) - 0.3).abs() < 1e-12);
        let shifted = (&gt + 0.1).unwrap();
        assert!((scalar(&depth_loss(&shifted, &gt, None).unwrap().loss) - 0.1).abs() < 1e-12);
        let mask = t(&[1.0, 0.0], (1, 1, 1, 2));
        assert!((scalar(&depth_loss(&pred, &gt, Some(&mask)).unwrap().loss) - 0.3).abs() < 1e-12);
        let empty = t(&[0.0, 0.0], (1, 1, 1, 2));
        assert!(depth_loss(&pred, &gt, Some(&empty)).unwrap().empty);
    }

    #[test]
    fn adversarial_scalar_cases() {
        let z = t(&[0.0; 4], (1, 1, 2, 2));
        let m = GanLoss::Nonsaturating;
        assert!((scalar(&adv_disc_loss(&z, &z, m).unwrap()) - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((scalar(&adv_gen_loss(&z, m).unwrap()) - 2f64.ln()).abs() < 1e-12);

        let l3 = t(&[3f64.ln()], (1, 1, 1, 1));
        let d = scalar(&adv_disc_loss(&l3, &l3, m).unwrap());
        assert!((d - -(0.75f64.ln() + 0.25f64.ln())).abs() < 1e-12);
        assert!((d - 1.674).abs() < 1e-3);
        let g = scalar(&adv_gen_loss(&l3, m).unwrap());
        assert!((g - -(0.75f64.ln())).abs() < 1e-12);
        assert!((g - 0.2877).abs() < 1e-4);

        let big = t(&[200.0], (1, 1, 1, 1));
        let small = t(&[-200.0], (1, 1, 1, 1));
        assert!(scalar(&adv_disc_loss(&big, &small, m).unwrap()) < 1e-12);
        assert!(scalar(&adv_gen_loss(&big, m).unwrap()) < 1e-12);
    }

    #[test]
    fn swapped_generator_loss_at_indifference() {
        let z = t(&[0.0; 4], (1, 1, 2, 2));
        let v = scalar(&adv_gen_loss_swapped(&z, &z, GanLoss::Nonsaturating).unwrap());
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-12);
        // minimax generator objective is the negated discriminator loss
        let r = t(&[0.3, -1.0], (1, 1, 1, 2));
        let f = t(&[1.2, 0.1], (1, 1, 1, 2));
        let g = scalar(&adv_gen_loss_swapped(&f, &r, GanLoss::Minimax).unwrap());
        let d = scalar(&adv_disc_loss(&r, &f, GanLoss::Minimax).unwrap());
        assert!((g + d).abs() < 1e-12);
    }

    #[test]
    fn least_squares_targets() {
        let ones = t(&[1.0; 2], (1, 1, 1, 2));
        let zeros = t(&[0.0; 2], (1, 1, 1, 2));
        let m = GanLoss::LeastSquares;
        assert_eq!(scalar(&adv_disc_loss(&ones, &zeros, m).unwrap()), 0.0);
        assert_eq!(scalar(&adv_gen_loss(&ones, m).unwrap()), 0.0);
    }

    #[test]
    fn concat_channels() {
        let logits = Tensor::randn(0f64, 2.0, (1, 10, 3, 4), &Device::Cpu).unwrap();
        let depth = Tensor::rand(0f64, 1.0, (1, 1, 3, 4), &Device::Cpu).unwrap();
        let out = output_concat(&logits, &depth).unwrap();
        assert_eq!(out.dims(), &[1, 11, 3, 4]);
        let probs = out.narrow(1, 0, 10).unwrap().sum(1).unwrap();
        for v in probs.flatten_all().unwrap().to_vec1::<f64>().unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let d = out.narrow(1, 10, 1).unwrap();
        assert_eq!(
            d.flatten_all().unwrap().to_vec1::<f64>().unwrap(),
            depth.flatten_all().unwrap().to_vec1::<f64>().unwrap()
        );
        let vals = out.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        let p = GeneratorParts {
            seg: 1.0,
            depth: 0.5,
            adv_image: 0.2,
            adv_output: 3.0,
        };
        assert!((total_generator_loss(&p, &w) - 1.073).abs() < 1e-12);
        let zero_w = LossWeights {
            lambda_depth: 0.0,
            lambda_image: 0.0,
            lambda_output: 0.0,
        };
        assert_eq!(total_generator_loss(&p, &zero_w), 1.0);
        assert_eq!(total_generator_loss(&GeneratorParts::default(), &w), 0.0);
    }
}
