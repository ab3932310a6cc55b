//! Command-line entry points: `train`, `translate`, `evaluate`, `ablate`,
//! `gen-toy`.
//!
//! Runs live under `$GIOADA_RUN_ROOT` (default `./runs`). Each run
//! directory holds `manifest.json` (written before training, never
//! modified), `losses.jsonl`, `checkpoints/`, `inference/` and, once
//! finished, `summary.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{ClassesConfig, DataConfig, RunConfig, EVAL_SEED_OFFSET};
use crate::data::{write_toy_dataset, Layout, Split, ToyShift, ToyWorldConfig};
use crate::encoding::tensor_to_hwc;
use crate::error::{Error, Result};
use crate::eval::{self, render_table, EvalReport, MethodResult};
use crate::trainer::checkpoint::write_json;
use crate::trainer::{load_inference, run_training, RunOptions, Variant};
use crate::types::{deprocess_channel, ClassSet, Domain};

pub const RUN_ROOT_ENV: &str = "GIOADA_RUN_ROOT";

#[derive(Debug, Parser)]
#[command(name = "gioada", version, about = "Geometry-guided input/output domain adaptation for segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one variant; trailing `--dotted.key value` pairs override the config.
    Train(TrainArgs),
    /// Write transform-network translations of source images.
    Translate(TranslateArgs),
    /// Score a checkpoint on labelled target data.
    Evaluate(EvaluateArgs),
    /// Train and evaluate several variants over several seeds.
    Ablate(AblateArgs),
    /// Write the procedural toy benchmark to disk.
    GenToy(GenToyArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run configuration (defaults: the toy benchmark).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (default: derived from the config under the run root).
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Stop early after this many steps; rerunning resumes.
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Ignore existing checkpoints in the run directory.
    #[arg(long)]
    pub fresh: bool,
    /// Overrides such as `--variant.output joint --train.lr 1e-4`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Dataset directory (default: the config's dataset for this command).
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long, value_parser = parse_layout, default_value = "TOY")]
    pub layout: Layout,
    #[arg(long, value_parser = parse_split, default_value = "TRAIN")]
    pub split: Split,
    /// Config supplying the dataset and class set when `--root` is absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Checkpoint directory, or a run directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Inference export, checkpoint, or run directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for `metrics.json`, `table.md` and dumps.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write colorized input | ground truth | prediction panels.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated variants (`na,+sd/joint` or `off:off,gd_plus_sd:joint`).
    #[arg(long, value_delimiter = ',', required = true)]
    pub variants: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Where to write `ablation.md` / `ablation.json` (default: run root).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_scenes: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long)]
    pub hue_delta: Option<f64>,
    #[arg(long)]
    pub texture_noise: Option<f64>,
    #[arg(long)]
    pub brightness_delta: Option<f64>,
}

fn parse_layout(s: &str) -> std::result::Result<Layout, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase())).map_err(|e| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase())).map_err(|e| e.to_string())
}

/// Splits `--a.b value` / `--a.b=value` tokens into pairs.
pub fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(t) = it.next() {
        let key = t
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected `--key value`, got `{t}`")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("override `--{key}` is missing a value")))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Immutable record of how a run was started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub build: String,
    pub seed: u64,
    /// Role (`source`, `target`, `eval`) → content fingerprint.
    pub datasets: BTreeMap<String, String>,
    pub started_at_unix: u64,
    pub outputs: RunOutputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutputs {
    pub run_dir: PathBuf,
    pub log: PathBuf,
    pub checkpoints: PathBuf,
    pub export: PathBuf,
    pub summary: PathBuf,
}

/// Written when a run finishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub finished_at_unix: u64,
    pub variant: String,
    pub steps: u64,
    pub completed: bool,
    pub checkpoint: PathBuf,
    pub hygiene_checks: usize,
    pub hygiene_ok: bool,
    pub metrics: Option<EvalReport>,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn build_id() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Short content hash of a config, used to name runs.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(serde_json::to_vec(cfg)?);
    Ok(hex::encode(&digest[..6]))
}

pub fn default_run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    Ok(run_root().join(format!("{}-s{}-{}", cfg.variant().to_string().replace(':', "-"), cfg.seed, config_hash(cfg)?)))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Trains (or resumes) `cfg` in `run_dir`, then scores the `eval` data.
pub fn cmd_train(cfg: &RunConfig, run_dir: &Path, max_steps: Option<u64>, resume: bool) -> Result<RunSummary> {
    let classes = cfg.class_set()?;
    let source = cfg.source.open(Domain::Source, &classes)?;
    let target = cfg.target.open(Domain::Target, &classes)?;

    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let manifest_path = run_dir.join("manifest.json");
    if manifest_path.exists() {
        let existing: RunManifest = read_json(&manifest_path)?;
        if existing.config != *cfg && resume {
            return Err(Error::Incompatible(format!(
                "{} was started with a different configuration; use another --run-dir or --fresh",
                run_dir.display()
            )));
        }
    }
    if !manifest_path.exists() || !resume {
        let mut datasets = BTreeMap::new();
        datasets.insert("source".to_string(), cfg.source.fingerprint()?);
        datasets.insert("target".to_string(), cfg.target.fingerprint()?);
        if let Some(e) = &cfg.eval {
            datasets.insert("eval".to_string(), e.fingerprint()?);
        }
        let manifest = RunManifest {
            config: cfg.clone(),
            build: build_id(),
            seed: cfg.seed,
            datasets,
            started_at_unix: now_unix(),
            outputs: RunOutputs {
                run_dir: run_dir.to_path_buf(),
                log: crate::trainer::run::loss_log_path(run_dir),
                checkpoints: crate::trainer::run::checkpoints_dir(run_dir),
                export: crate::trainer::run::export_dir(run_dir),
                summary: run_dir.join("summary.json"),
            },
        };
        if !resume {
            let ck = crate::trainer::run::checkpoints_dir(run_dir);
            if ck.exists() {
                fs::remove_dir_all(&ck).map_err(|e| Error::io(&ck, e))?;
            }
        }
        write_json(&manifest_path, &manifest)?;
    }

    let opts = RunOptions {
        max_steps,
        resume,
        log_every: 100,
        ..Default::default()
    };
    let outcome = run_training(
        source.as_ref(),
        target.as_ref(),
        cfg.variant(),
        &cfg.train_config(),
        &classes,
        cfg.depth_norm,
        run_dir,
        &opts,
    )?;

    let metrics = match (&cfg.eval, outcome.completed) {
        (Some(e), true) => {
            let data = e.open(Domain::Target, &classes)?;
            let model = load_inference(&crate::trainer::run::export_dir(run_dir))?;
            let report = eval::evaluate_model(&model, &classes, data.as_ref(), None)?;
            eval::write_report(&run_dir.join("metrics.json"), &report)?;
            Some(report)
        }
        _ => None,
    };
    let summary = RunSummary {
        finished_at_unix: now_unix(),
        variant: cfg.variant().to_string(),
        steps: outcome.history.len() as u64,
        completed: outcome.completed,
        checkpoint: outcome.checkpoint,
        hygiene_checks: outcome.hygiene.len(),
        hygiene_ok: outcome.hygiene.iter().all(|h| h.ok()),
        metrics,
    };
    write_json(&run_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Dataset for a command: explicit `--root`, else the config's `pick`
/// section; the class set comes from the config (or the model's, if no
/// config was given).
fn resolve_data(args: &DataArgs, pick: fn(&RunConfig) -> Option<DataConfig>, model_classes: &ClassSet) -> Result<(DataConfig, ClassSet)> {
    let cfg = match &args.config {
        Some(p) => Some(RunConfig::load(p)?),
        None => None,
    };
    let classes = match &cfg {
        Some(c) => c.class_set()?,
        None => model_classes.clone(),
    };
    let data = match &args.root {
        Some(root) => DataConfig::on_disk(args.layout, root, args.split),
        None => pick(cfg.as_ref().unwrap_or(&RunConfig::default()))
            .ok_or_else(|| Error::Config("no dataset: pass --root or a config with this section".into()))?,
    };
    Ok((data, classes))
}

/// Writes `<out>/<id>.png` (translated) and `<out>/pairs/<id>.png`
/// (source | translated) for every source sample; returns the count.
pub fn cmd_translate(checkpoint: &Path, data: &DataConfig, classes: &ClassSet, out: &Path) -> Result<usize> {
    let model = load_inference(checkpoint)?;
    if model.transform.is_none() {
        return Err(Error::Capability(format!(
            "{} has no image transform network (variant {}); only input-level variants can translate",
            checkpoint.display(),
            model.variant
        )));
    }
    if &model.classes != classes {
        return Err(Error::InvalidInput("checkpoint class set differs from the dataset's".into()));
    }
    let samples = data.open(Domain::Source, classes)?;
    let pairs = out.join("pairs");
    fs::create_dir_all(&pairs).map_err(|e| Error::io(&pairs, e))?;
    for i in 0..samples.len() {
        let s = samples.get(i)?;
        let translated = tensor_to_hwc(&model.translate(&s)?)?.mapv(deprocess_channel);
        let original = s.image.mapv(deprocess_channel);
        eval::save_rgb(&out.join(format!("{}.png", s.id)), &translated)?;
        let panel = ndarray::concatenate(ndarray::Axis(1), &[original.view(), translated.view()])
            .map_err(|e| Error::Numeric(e.to_string()))?;
        eval::save_rgb(&pairs.join(format!("{}.png", s.id)), &panel)?;
    }
    Ok(samples.len())
}

/// Writes `metrics.json` and `table.md` (and panels with `dump`).
pub fn cmd_evaluate(checkpoint: &Path, data: &DataConfig, classes: &ClassSet, out: &Path, dump: bool) -> Result<EvalReport> {
    let model = load_inference(checkpoint)?;
    let samples = data.open(Domain::Target, classes)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let dump_dir = out.join("predictions");
    let report = eval::evaluate_model(&model, classes, samples.as_ref(), dump.then_some(dump_dir.as_path()))?;
    eval::write_report(&out.join("metrics.json"), &report)?;
    let table = render_table(&[report.method_result(&model.variant.label())], classes)?;
    fs::write(out.join("table.md"), &table).map_err(|e| Error::io(out.join("table.md"), e))?;
    Ok(report)
}

/// One (variant, seed) cell of an ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub variant: String,
    pub label: String,
    pub seed: u64,
    pub run_dir: PathBuf,
    pub cached: bool,
    pub metrics: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub runs: Vec<AblationRun>,
    /// Per variant: mean per-class IoU and mean mIoU over seeds.
    pub rows: Vec<MethodResult>,
    pub mean_miou: Vec<(String, f64)>,
    pub table: String,
}

/// Trains every variant × seed (reusing finished runs whose manifest
/// matches) and renders a per-variant table averaged over seeds.
pub fn cmd_ablate(base: &RunConfig, variants: &[Variant], seeds: &[u64], root: &Path) -> Result<AblationResult> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one variant and one seed".into()));
    }
    if base.eval.is_none() {
        return Err(Error::Config("ablation needs an `eval` dataset".into()));
    }
    let classes = base.class_set()?;
    let mut runs = Vec::new();
    for &v in variants {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.variant = v.into();
            cfg.seed = seed;
            let dir = root.join(format!("{}-s{seed}-{}", v.to_string().replace(':', "-"), config_hash(&cfg)?));
            let cached = cached_metrics(&dir, &cfg)?;
            let (metrics, cached) = match cached {
                Some(m) => (m, true),
                None => {
                    let summary = cmd_train(&cfg, &dir, None, true)?;
                    let m = summary
                        .metrics
                        .ok_or_else(|| Error::Precondition(format!("run {} produced no metrics", dir.display())))?;
                    (m, false)
                }
            };
            log::info!("{v} seed {seed}: mIoU {:.2}{}", 100.0 * metrics.miou, if cached { " (cached)" } else { "" });
            runs.push(AblationRun {
                variant: v.to_string(),
                label: v.label(),
                seed,
                run_dir: dir,
                cached,
                metrics,
            });
        }
    }
    let mut rows = Vec::new();
    let mut mean_miou = Vec::new();
    for &v in variants {
        let mine: Vec<&AblationRun> = runs.iter().filter(|r| r.variant == v.to_string()).collect();
        let per_class = (0..classes.num_classes())
            .map(|k| {
                let vals: Vec<f64> = mine.iter().filter_map(|r| r.metrics.per_class_iou[k]).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        rows.push(MethodResult {
            method: v.label(),
            class_names: classes.names.clone(),
            per_class,
        });
        mean_miou.push((v.label(), mine.iter().map(|r| r.metrics.miou).sum::<f64>() / mine.len() as f64));
    }
    let table = render_table(&rows, &classes)?;
    Ok(AblationResult {
        runs,
        rows,
        mean_miou,
        table,
    })
}

/// Metrics of a finished run whose manifest matches `cfg`.
fn cached_metrics(dir: &Path, cfg: &RunConfig) -> Result<Option<EvalReport>> {
    let (mp, sp) = (dir.join("manifest.json"), dir.join("summary.json"));
    if !(mp.exists() && sp.exists()) {
        return Ok(None);
    }
    let manifest: RunManifest = read_json(&mp)?;
    let summary: RunSummary = read_json(&sp)?;
    Ok(match (manifest.config == *cfg, summary.completed, summary.metrics) {
        (true, true, Some(m)) => Some(m),
        _ => None,
    })
}

/// Writes `source/`, `target/` and held-out `eval/` toy datasets plus a
/// `config.json` that trains on them.
pub fn cmd_gen_toy(out: &Path, toy: ToyWorldConfig) -> Result<RunConfig> {
    toy.validate()?;
    let eval_toy = ToyWorldConfig {
        seed: toy.seed + EVAL_SEED_OFFSET,
        ..toy
    };
    write_toy_dataset(&out.join("source"), &toy, Domain::Source)?;
    write_toy_dataset(&out.join("target"), &toy, Domain::Target)?;
    write_toy_dataset(&out.join("eval"), &eval_toy, Domain::Target)?;
    let cfg = RunConfig {
        classes: ClassesConfig::Preset("toy".into()),
        source: DataConfig::on_disk(Layout::Toy, out.join("source"), Split::Train),
        target: DataConfig::on_disk(Layout::Toy, out.join("target"), Split::Train),
        eval: Some(DataConfig::on_disk(Layout::Toy, out.join("eval"), Split::Train)),
        ..RunConfig::default()
    };
    write_json(&out.join("config.json"), &cfg)?;
    Ok(cfg)
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let base = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    base.with_overrides(&parse_overrides(overrides)?)
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let cfg = load_config(a.config.as_deref(), &a.overrides)?;
            let dir = match a.run_dir {
                Some(d) => d,
                None => default_run_dir(&cfg)?,
            };
            let s = cmd_train(&cfg, &dir, a.max_steps, !a.fresh)?;
            println!("run directory: {}", dir.display());
            println!("steps: {} (completed: {})", s.steps, s.completed);
            if let Some(m) = &s.metrics {
                println!("target mIoU: {:.2}", 100.0 * m.miou);
            }
        }
        Command::Translate(a) => {
            let model = load_inference(&a.checkpoint)?;
            let (data, classes) = resolve_data(&a.data, |c| Some(c.source.clone()), &model.classes)?;
            let n = cmd_translate(&a.checkpoint, &data, &classes, &a.out)?;
            println!("translated {n} images into {}", a.out.display());
        }
        Command::Evaluate(a) => {
            let model = load_inference(&a.checkpoint)?;
            let (data, classes) = resolve_data(&a.data, |c| c.eval.clone(), &model.classes)?;
            let r = cmd_evaluate(&a.checkpoint, &data, &classes, &a.out, a.dump)?;
            print!("{}", render_table(&[r.method_result(&model.variant.label())], &classes)?);
            println!("mIoU: {:.2}", 100.0 * r.miou);
        }
        Command::Ablate(a) => {
            let cfg = load_config(a.config.as_deref(), &a.overrides)?;
            let variants = a.variants.iter().map(|v| v.parse()).collect::<Result<Vec<Variant>>>()?;
            let root = run_root().join("ablate");
            let result = cmd_ablate(&cfg, &variants, &a.seeds, &root)?;
            let out = a.out.unwrap_or_else(run_root);
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            fs::write(out.join("ablation.md"), &result.table).map_err(|e| Error::io(out.join("ablation.md"), e))?;
            write_json(&out.join("ablation.json"), &result)?;
            print!("{}", result.table);
        }
        Command::GenToy(a) => {
            let d = ToyShift::default();
            let toy = ToyWorldConfig {
                seed: a.seed,
                image_size: (a.height, a.width),
                n_scenes: a.n_scenes,
                shift: ToyShift {
                    hue_delta: a.hue_delta.unwrap_or(d.hue_delta),
                    texture_noise: a.texture_noise.unwrap_or(d.texture_noise),
                    brightness_delta: a.brightness_delta.unwrap_or(d.brightness_delta),
                },
            };
            cmd_gen_toy(&a.out, toy)?;
            println!("wrote toy benchmark and config.json to {}", a.out.display());
        }
    }
    Ok(())
}

/// Process exit code for a command result: 0 success, 2 usage, 1 runtime.
pub fn exit_code(r: &Result<()>) -> i32 {
    match r {
        Ok(()) => 0,
        Err(e) if e.is_usage() => 2,
        Err(_) => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_accept_both_spellings() {
        let toks: Vec<String> = ["--variant.output", "joint", "--train.lr=1e-4"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            parse_overrides(&toks).unwrap(),
            vec![("variant.output".into(), "joint".into()), ("train.lr".into(), "1e-4".into())]
        );
        assert!(parse_overrides(&["--seed".to_string()]).is_err());
        assert!(parse_overrides(&["seed".to_string(), "1".to_string()]).is_err());
    }

    #[test]
    fn clap_collects_trailing_overrides() {
        let cli = Cli::try_parse_from(["gioada", "train", "--max-steps", "5", "--variant.input", "off", "--seed", "3"]).unwrap();
        match cli.command {
            Command::Train(a) => {
                assert_eq!(a.max_steps, Some(5));
                assert_eq!(a.overrides, vec!["--variant.input", "off", "--seed", "3"]);
            }
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["gioada", "ablate", "--variants", "na,+sd/joint", "--seeds", "0,1"]).unwrap();
        match cli.command {
            Command::Ablate(a) => {
                assert_eq!(a.variants, vec!["na", "+sd/joint"]);
                assert_eq!(a.seeds, vec![0, 1]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(())), 0);
        assert_eq!(exit_code(&Err(Error::Config("x".into()))), 2);
        assert_eq!(
            exit_code(&Err(Error::UnknownKey {
                key: "a".into(),
                valid: vec![]
            })),
            2
        );
        assert_eq!(exit_code(&Err(Error::Capability("x".into()))), 1);
    }
}
