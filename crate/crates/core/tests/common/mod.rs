//! Shared fixtures for integration tests.

#![allow(dead_code)]

use candle_core::{DType, Device, Tensor, Var};
use gioada::losses::{self, GanLoss};
use gioada::networks::{
    init_discriminator, init_task, init_transform, PatchDiscriminator, PatchDiscriminatorConfig,
    ParamStore, TaskNet, TaskNetConfig, TransformNet, TransformNetConfig,
};
use gioada::LossWeights;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const C: usize = 3;
pub const SIZE: usize = 16;

pub struct Fixture {
    pub g_img: TransformNet,
    pub g_img_p: ParamStore,
    pub g_task: TaskNet,
    pub g_task_p: ParamStore,
    pub d_img: PatchDiscriminator,
    pub d_out: PatchDiscriminator,
    pub encoded: Tensor,
    pub target_image: Tensor,
    pub onehot: Tensor,
    pub depth_gt: Tensor,
    pub weights: LossWeights,
}

pub fn fixture() -> Fixture {
    let dev = Device::Cpu;
    let dt = DType::F64;
    let (g_img, g_img_p) = init_transform(
        TransformNetConfig {
            in_channels: 3 + C + 1,
            base_width: 4,
            n_residual_blocks: 1,
        },
        1,
        dt,
        &dev,
    )
    .unwrap();
    let (g_task, g_task_p) = init_task(
        TaskNetConfig {
            tiny_width: 4,
            ..TaskNetConfig::tiny(C)
        },
        2,
        None,
        dt,
        &dev,
    )
    .unwrap();
    let small = |k| PatchDiscriminatorConfig {
        in_channels: k,
        n_layers: 1,
        base_width: 4,
        padding: 1,
    };
    let (d_img, _) = init_discriminator(small(3), 3, dt, &dev).unwrap();
    let (d_out, _) = init_discriminator(small(C + 1), 4, dt, &dev).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = SIZE * SIZE;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..C)).collect();
    let mut onehot = vec![0f64; C * n];
    for (p, &l) in labels.iter().enumerate() {
        onehot[l * n + p] = 1.0;
    }
    let image: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let depth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut enc = image.clone();
    enc.extend_from_slice(&onehot);
    enc.extend_from_slice(&depth);
    let target: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = |v: Vec<f64>, k: usize| Tensor::from_vec(v, (1, k, SIZE, SIZE), &dev).unwrap();
    Fixture {
        g_img,
        g_img_p,
        g_task,
        g_task_p,
        d_img,
        d_out,
        encoded: t(enc, 3 + C + 1),
        target_image: t(target, 3),
        onehot: t(onehot, C),
        depth_gt: t(depth, 1),
        weights: LossWeights {
            lambda_depth: 0.1,
            lambda_image: 0.1,
            lambda_output: 0.1,
        },
    }
}

/// Generator objective with all four terms live.
pub fn objective(f: &Fixture) -> Tensor {
    let mode = GanLoss::Nonsaturating;
    let fake = f.g_img.forward(&f.encoded).unwrap();
    let src = f.g_task.forward(&fake).unwrap();
    let tgt = f.g_task.forward(&f.target_image).unwrap();
    let seg = losses::seg_loss(&src.seg_logits, &f.onehot).unwrap().loss;
    let src_depth = src.depth.as_ref().unwrap();
    let depth = losses::depth_loss(src_depth, &f.depth_gt, None).unwrap().loss;
    let adv_img = losses::adv_gen_loss(&f.d_img.forward(&fake).unwrap(), mode).unwrap();
    let src_map = losses::output_concat(&src.seg_logits, src_depth).unwrap();
    let tgt_map = losses::output_concat(&tgt.seg_logits, tgt.depth.as_ref().unwrap()).unwrap();
    let adv_out = losses::adv_gen_loss_swapped(
        &f.d_out.forward(&src_map).unwrap(),
        &f.d_out.forward(&tgt_map).unwrap(),
        mode,
    )
    .unwrap();
    losses::total_generator_tensor(&seg, Some(&depth), Some(&adv_img), Some(&adv_out), &f.weights)
        .unwrap()
}

fn value(f: &Fixture) -> f64 {
    objective(f).to_scalar::<f64>().unwrap()
}

fn set_scalar(var: &Var, idx: usize, v: f64) {
    let mut data = var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    data[idx] = v;
    let t = Tensor::from_vec(data, var.shape(), var.device()).unwrap();
    var.set(&t).unwrap();
}

fn get_scalar(t: &Tensor, idx: usize) -> f64 {
    t.flatten_all().unwrap().to_vec1::<f64>().unwrap()[idx]
}

/// Outcome of comparing analytic and finite-difference gradients.
pub struct GradCheck {
    pub checked: usize,
    pub worst: f64,
    /// Checked transform-network parameters with a nonzero gradient.
    pub nonzero_transform: usize,
    /// First parameter over `tol`, if any.
    pub failure: Option<String>,
}

/// Checks `n` randomly chosen generator parameters with a fourth-order
/// central stencil.
pub fn gradient_check(n: usize, seed: u64, tol: f64) -> GradCheck {
    let f = fixture();
    let loss = objective(&f);
    let grads = loss.backward().unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<(String, Var)> = f
        .g_img_p
        .iter()
        .map(|(n, v)| (format!("g_img.{n}"), v.clone()))
        .chain(f.g_task_p.iter().map(|(n, v)| (format!("g_task.{n}"), v.clone())))
        .collect();
    // truncation error ~eps^4, roundoff ~1e-16/eps
    let eps = 1e-5;
    let mut out = GradCheck {
        checked: 0,
        worst: 0.0,
        nonzero_transform: 0,
        failure: None,
    };
    while out.checked < n {
        let (name, var) = &vars[rng.random_range(0..vars.len())];
        let idx = rng.random_range(0..var.elem_count());
        let analytic = grads
            .get(var.as_tensor())
            .map(|g| get_scalar(g, idx))
            .unwrap_or(0.0);
        let orig = get_scalar(var.as_tensor(), idx);
        let at = |d: f64| {
            set_scalar(var, idx, orig + d);
            value(&f)
        };
        let (p1, m1, p2, m2) = (at(eps), at(-eps), at(2.0 * eps), at(-2.0 * eps));
        set_scalar(var, idx, orig);
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale == 0.0 { 0.0 } else { (analytic - numeric).abs() / scale };
        out.worst = out.worst.max(rel);
        if rel >= tol && out.failure.is_none() {
            out.failure = Some(format!(
                "{name}[{idx}]: analytic {analytic:e} vs numeric {numeric:e} (rel {rel:e})"
            ));
        }
        if name.starts_with("g_img") && analytic != 0.0 {
            out.nonzero_transform += 1;
        }
        out.checked += 1;
    }
    out
}
