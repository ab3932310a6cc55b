//! Training loop behavior: equivalence with a plain supervised loop,
//! logging, resume, determinism and hygiene bookkeeping.

use candle_core::{DType, Device, Tensor};
use gioada::data::{generate_toy, ToyWorldConfig};
use gioada::encoding::{hwc_to_tensor, labels_to_onehot_tensor};
use gioada::losses;
use gioada::trainer::run::{loss_log_path, read_loss_log};
use gioada::trainer::{run_training, Adam, variant_wiring, ArchConfig, Models, RunOptions, TrainConfig, Trainer, Variant};
use gioada::{ClassSet, DepthNormalizer, Domain, Error, LossWeights, Sample};

fn toy(n: usize) -> (Vec<Sample>, Vec<Sample>) {
    let cfg = ToyWorldConfig {
        n_scenes: n,
        ..Default::default()
    };
    (
        generate_toy(&cfg, Domain::Source).unwrap(),
        generate_toy(&cfg, Domain::Target).unwrap(),
    )
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        checkpoint_every: 0,
        arch: ArchConfig::toy(),
        ..Default::default()
    }
}

/// Mean cross-entropy over non-ignored pixels, computed on the host in f64.
fn host_cross_entropy(logits: &Tensor, labels: &ndarray::Array2<u8>, ignore: u8) -> f64 {
    let (_, c, h, w) = logits.dims4().unwrap();
    let z = logits.flatten_all().unwrap().to_vec1::<f32>().unwrap();
    let n = h * w;
    let (mut loss, mut valid) = (0.0, 0.0);
    for (p, &l) in labels.iter().enumerate() {
        if l == ignore {
            continue;
        }
        let zs: Vec<f64> = (0..c).map(|k| z[k * n + p] as f64).collect();
        let mx = zs.iter().cloned().fold(f64::MIN, f64::max);
        let lse = mx + zs.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        loss -= zs[l as usize] - lse;
        valid += 1.0;
    }
    loss / valid
}

#[test]
fn baseline_without_depth_matches_plain_supervised_loop() {
    let (src, tgt) = toy(5);
    let classes = ClassSet::toy();
    let cfg = TrainConfig {
        augment: false,
        weights: LossWeights {
            lambda_depth: 0.0,
            ..Default::default()
        },
        ..small_config(4)
    };
    let min_side = 32;
    let mut trainer = Trainer::new(Variant::BASELINE, classes.clone(), DepthNormalizer::TOY, cfg.clone(), min_side).unwrap();

    let dev = Device::Cpu;
    let reference = Models::new(&variant_wiring(Variant::BASELINE, classes.num_classes()), &cfg.arch, cfg.seed, min_side, &dev).unwrap();
    let params = reference.generator_params();
    let mut adam = Adam::new(cfg.lr, cfg.beta1, cfg.beta2);

    let mut worst: f64 = 0.0;
    for step in 0..20 {
        let s = &src[step % src.len()];
        let report = trainer.train_step(s, &tgt[step % tgt.len()]).unwrap();

        let x = hwc_to_tensor(&s.image, DType::F32, &dev).unwrap();
        let logits = reference.g_task.net.forward(&x).unwrap().seg_logits;
        let labels = s.eval_labels().unwrap();
        let loss = host_cross_entropy(&logits, labels, classes.ignore_index);
        let onehot = labels_to_onehot_tensor(labels, classes.num_classes(), classes.ignore_index, DType::F32, &dev).unwrap();
        let seg = losses::seg_loss(&logits, &onehot).unwrap();
        let seg_value = seg.value().unwrap();
        adam.step(&params, &seg.loss.backward().unwrap()).unwrap();

        // same trajectory: parameters agree to f32 rounding after every update
        for ((name, a), (_, b)) in trainer.models.generator_params().iter().zip(&params) {
            let d = (a.as_tensor() - b.as_tensor()).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap() as f64;
            assert!(d < 1e-6, "step {step}: {name} differs by {d:e}");
        }
        let diff = (report.seg - seg_value).abs();
        worst = worst.max(diff);
        assert!(diff < 1e-6, "step {step}: trainer {} vs reference {seg_value}", report.seg);
        // independent value check; the library loss is an f32 reduction
        assert!((seg_value - loss).abs() < 1e-5, "step {step}: {seg_value} vs host {loss}");
        assert!((report.total_g - report.seg).abs() < 1e-6);
        assert!(report.adv_image_g.is_none() && report.adv_output_g.is_none());
    }
    println!("worst loss difference {worst:e}");
}

#[test]
fn fifty_scenes_ten_epochs_log_five_hundred_steps() {
    let (src, tgt) = toy(50);
    let dir = tempfile::tempdir().unwrap();
    let out = run_training(
        &src,
        &tgt,
        Variant::BASELINE,
        &small_config(10),
        &ClassSet::toy(),
        DepthNormalizer::TOY,
        dir.path(),
        &RunOptions::default(),
    )
    .unwrap();
    assert!(out.completed && out.export.is_some());
    let log = read_loss_log(&loss_log_path(dir.path())).unwrap();
    assert_eq!(log.len(), 500);
    assert!(log.iter().enumerate().all(|(i, r)| r.step == i as u64 && r.is_finite().is_ok()));
    assert_eq!(out.history, log);
    // hygiene runs every 100 steps by default
    assert_eq!(out.hygiene.iter().map(|h| h.step).collect::<Vec<_>>(), vec![0, 100, 200, 300, 400]);
}

#[test]
fn runs_are_deterministic() {
    let (src, tgt) = toy(4);
    let cfg = small_config(1);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        run_training(&src, &tgt, Variant::FULL, &cfg, &ClassSet::toy(), DepthNormalizer::TOY, dir.path(), &RunOptions::default())
            .unwrap()
            .history
    };
    assert_eq!(run(), run());
}

#[test]
fn resume_rejects_a_different_variant_or_hyperparameters() {
    let (src, tgt) = toy(4);
    let classes = ClassSet::toy();
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(2);
    let opts = RunOptions {
        max_steps: Some(3),
        ..Default::default()
    };
    run_training(&src, &tgt, Variant::FULL, &cfg, &classes, DepthNormalizer::TOY, dir.path(), &opts).unwrap();

    let err = run_training(&src, &tgt, Variant::BASELINE, &cfg, &classes, DepthNormalizer::TOY, dir.path(), &opts).unwrap_err();
    assert!(matches!(err, Error::Incompatible(_)), "{err}");
    let lr = TrainConfig { lr: 1e-3, ..cfg.clone() };
    let err = run_training(&src, &tgt, Variant::FULL, &lr, &classes, DepthNormalizer::TOY, dir.path(), &opts).unwrap_err();
    assert!(matches!(err, Error::Incompatible(m) if m.contains("lr")));

    // a longer epoch budget is a legitimate continuation
    let longer = TrainConfig { epochs: 3, ..cfg };
    let out = run_training(&src, &tgt, Variant::FULL, &longer, &classes, DepthNormalizer::TOY, dir.path(), &RunOptions::default()).unwrap();
    assert!(out.completed);
    assert_eq!(out.history.len(), 12);
}

#[test]
fn interrupted_log_tail_is_recomputed() {
    let (src, tgt) = toy(4);
    let classes = ClassSet::toy();
    let cfg = TrainConfig {
        checkpoint_every: 2,
        ..small_config(1)
    };
    let straight = tempfile::tempdir().unwrap();
    let expected = run_training(&src, &tgt, Variant::BASELINE, &cfg, &classes, DepthNormalizer::TOY, straight.path(), &RunOptions::default())
        .unwrap()
        .history;

    // simulate a crash after step 3: checkpoint at 2, log holds 3 records and a torn line
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        max_steps: Some(3),
        ..Default::default()
    };
    run_training(&src, &tgt, Variant::BASELINE, &cfg, &classes, DepthNormalizer::TOY, dir.path(), &opts).unwrap();
    let ckpts = dir.path().join("checkpoints");
    std::fs::remove_dir_all(ckpts.join("step_00000003")).unwrap();
    std::fs::write(ckpts.join("LATEST"), "step_00000002").unwrap();
    let log = loss_log_path(dir.path());
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"step\": 3, \"se");
    std::fs::write(&log, text).unwrap();

    let resumed = run_training(&src, &tgt, Variant::BASELINE, &cfg, &classes, DepthNormalizer::TOY, dir.path(), &RunOptions::default())
        .unwrap()
        .history;
    assert_eq!(resumed, expected);
    assert_eq!(read_loss_log(&log).unwrap(), expected);
}
