//! Full training runs: scheduling, logging, checkpointing and resume.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::step::{Hygiene, TrainConfig, Trainer};
use super::variant::Variant;
use crate::data::{augment, PairSchedule, SampleSource};
use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::types::{ClassSet, DepthNormalizer, Domain};

/// Offset separating the augmentation stream from every other seeded stream.
const AUGMENT_SEED: u64 = 0x5eed_a06e;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Stop after this many total steps (the schedule is unchanged, so a
    /// later resume continues exactly where this run stopped).
    pub max_steps: Option<u64>,
    /// Continue from the latest checkpoint in the run directory, if any.
    pub resume: bool,
    /// Number of intermediate checkpoints kept on disk.
    pub keep_checkpoints: usize,
    /// Log a progress line every this many steps (0 = silent).
    pub log_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_steps: None,
            resume: true,
            keep_checkpoints: 2,
            log_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Last checkpoint written.
    pub checkpoint: PathBuf,
    /// Task-network export (present once the schedule has completed).
    pub export: Option<PathBuf>,
    /// Every logged step, including those of earlier interrupted runs.
    pub history: Vec<LossReport>,
    /// Every hygiene result produced by this invocation.
    pub hygiene: Vec<Hygiene>,
    pub completed: bool,
}

/// Paths inside a run directory.
pub fn checkpoints_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("checkpoints")
}

pub fn loss_log_path(run_dir: &Path) -> PathBuf {
    run_dir.join("losses.jsonl")
}

pub fn export_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("inference")
}

/// Trains `variant` for `config.epochs` epochs of `source.len()` steps each.
#[allow(clippy::too_many_arguments)]
pub fn run_training<S, T>(
    source: &S,
    target: &T,
    variant: Variant,
    config: &TrainConfig,
    classes: &ClassSet,
    depth_norm: DepthNormalizer,
    run_dir: &Path,
    opts: &RunOptions,
) -> Result<TrainOutcome>
where
    S: SampleSource + ?Sized,
    T: SampleSource + ?Sized,
{
    config.validate()?;
    let mut schedule = PairSchedule::new(source.len(), target.len(), config.seed)?;
    let total = (config.epochs as u64) * schedule.epoch_len() as u64;
    let first = source.get(0)?;
    if first.domain != Domain::Source {
        return Err(Error::InvalidInput(format!("`{}` is not a source-domain sample", first.id)));
    }
    let min_side = first.height().min(first.width());

    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let ckpt_dir = checkpoints_dir(run_dir);
    let mut trainer = match (opts.resume, Checkpoint::latest(&ckpt_dir)?) {
        (true, Some(path)) => {
            let state = Checkpoint::read_state(&path)?;
            Checkpoint::check_compatible(&state, variant, config, classes)?;
            let mut t = Checkpoint::restore(&path)?;
            // epoch budget and checkpoint period may be changed on resume
            t.config = config.clone();
            t
        }
        _ => Trainer::new(variant, classes.clone(), depth_norm, config.clone(), min_side)?,
    };

    let log_path = loss_log_path(run_dir);
    let mut history = read_history(&log_path, trainer.step)?;
    let mut log = open_log(&log_path, &history)?;

    let stop = opts.max_steps.map_or(total, |m| m.min(total));
    let mut hygiene = Vec::new();
    let mut last_ckpt = None;
    while trainer.step < stop {
        let step = trainer.step;
        let (si, ti) = schedule.at(step);
        let (mut s, mut t) = (source.get(si)?, target.get(ti)?);
        if config.augment {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ AUGMENT_SEED);
            rng.set_stream(step);
            s = augment(&s, &mut rng);
            t = augment(&t, &mut rng);
        }
        let report = trainer.train_step(&s, &t)?;
        if let Some(h) = trainer.last_hygiene.filter(|h| h.step == step) {
            hygiene.push(h);
        }
        writeln!(log, "{}", serde_json::to_string(&report)?).map_err(|e| Error::io(&log_path, e))?;
        history.push(report);
        if opts.log_every > 0 && trainer.step % opts.log_every == 0 {
            log::info!(
                "{variant} step {}/{total}: seg {:.4} total {:.4}",
                trainer.step,
                report.seg,
                report.total_g
            );
        }
        if config.checkpoint_every > 0 && trainer.step % config.checkpoint_every == 0 && trainer.step < stop {
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            last_ckpt = Some(Checkpoint::save(&trainer, &ckpt_dir, opts.keep_checkpoints)?);
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;

    let checkpoint = match last_ckpt {
        Some(p) if p.ends_with(format!("step_{:08}", trainer.step)) => p,
        _ => Checkpoint::save(&trainer, &ckpt_dir, opts.keep_checkpoints)?,
    };
    let completed = trainer.step >= total;
    let export = if completed {
        Some(Checkpoint::export_inference(&trainer, &export_dir(run_dir))?)
    } else {
        None
    };
    Ok(TrainOutcome {
        checkpoint,
        export,
        history,
        hygiene,
        completed,
    })
}

/// Log records of steps before `upto` (later records belong to work that
/// was lost with an interrupted run and will be recomputed).
fn read_history(path: &Path, upto: u64) -> Result<Vec<LossReport>> {
    if upto == 0 || !path.exists() {
        return Ok(Vec::new());
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let Ok(r) = serde_json::from_str::<LossReport>(&line) else {
            // a torn final line from a crash
            break;
        };
        if r.step >= upto {
            break;
        }
        out.push(r);
    }
    if out.len() as u64 != upto {
        return Err(Error::Load {
            path: path.to_path_buf(),
            message: format!("log holds {} records but the checkpoint is at step {upto}", out.len()),
        });
    }
    Ok(out)
}

/// Rewrites the log to exactly `history` and opens it for appending.
fn open_log(path: &Path, history: &[LossReport]) -> Result<BufWriter<File>> {
    let mut text = String::new();
    for r in history {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    super::checkpoint::write_atomic(path, text.as_bytes())?;
    let f = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

/// Reads a `losses.jsonl` file.
pub fn read_loss_log(path: &Path) -> Result<Vec<LossReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Load {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}
