//! Minibatch training with checkpoints, resumption, and a CSV log.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::binio::{Reader, Writer};
use crate::cfa::{CfaPattern, PlaneStack};
use crate::data::{collate, Batcher, PatchPair};
use crate::error::{Error, Result};
use crate::layers::{l2_loss, NormMode};
use crate::metrics::cpsnr;
use crate::models::{load_weights, project_pattern_weights, save_weights, Model, Source};
use crate::optim::{Optimizer, OptimizerKind};
use crate::tensor::Tensor4D;

pub const CHECKPOINT_FILE: &str = "checkpoint.cfw";
pub const OPTIMIZER_FILE: &str = "checkpoint.opt";
pub const LOG_FILE: &str = "train_log.csv";
pub const DIVERGED_FILE: &str = "diverged.cfw";
pub const LOG_HEADER: &str = "iteration,loss,val_cpsnr";

const OPT_MAGIC: &[u8; 8] = b"CFANETO\0";
const OPT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Seed of the minibatch order.
    pub seed: u64,
    /// Save a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
    /// Validate every this many iterations (0: never).
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            batch_size: 64,
            optimizer: OptimizerKind::adam(),
            lr: 1e-4,
            seed: 0,
            checkpoint_every: 0,
            validate_every: 0,
        }
    }
}

/// Training and validation patches. `pattern` is the mosaic pattern of the
/// inputs, or `None` when the model samples RGB patches itself.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Vec<PatchPair>,
    pub val: Vec<PatchPair>,
    pub pattern: Option<CfaPattern>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub loss: f64,
    pub val_cpsnr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.rows {
            let val = r.val_cpsnr.map(|v| v.to_string()).unwrap_or_default();
            writeln!(s, "{},{},{}", r.iteration, r.loss, val).unwrap();
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(Error::Format("training log: missing header".into()));
        }
        let bad = |l: &str| Error::Format(format!("training log: bad row `{l}`"));
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 3 {
                    return Err(bad(l));
                }
                Ok(LogRow {
                    iteration: f[0].parse().map_err(|_| bad(l))?,
                    loss: f[1].parse().map_err(|_| bad(l))?,
                    val_cpsnr: if f[2].is_empty() {
                        None
                    } else {
                        Some(f[2].parse().map_err(|_| bad(l))?)
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainLog { rows })
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }
}

/// Target the model output is compared against: the truth, center-cropped
/// by whatever unpadded convolutions remove.
pub fn loss_target(model: &Model, truth: &Tensor4D) -> Result<Tensor4D> {
    let (sh, sw) = model.shrinkage();
    if sh == 0 && sw == 0 {
        return Ok(truth.clone());
    }
    let d = truth.dims();
    if d.h <= sh || d.w <= sw {
        return Err(Error::shape(
            "loss_target",
            format!("truth {d}"),
            format!("model shrinking by {sh}x{sw}"),
        ));
    }
    truth.center_crop(d.h - sh, d.w - sw)
}

fn source<'a>(
    input: Option<&'a PlaneStack>,
    pattern: Option<&'a CfaPattern>,
    truth: &'a Tensor4D,
) -> Result<Source<'a>> {
    match (input, pattern) {
        (Some(s), Some(p)) => Ok(Source::Stack(s, p)),
        (None, _) => Ok(Source::Rgb(truth)),
        (Some(_), None) => Err(Error::Config("mosaic input without its pattern".into())),
    }
}

/// Loss of one batch without touching the model.
pub fn batch_loss(
    model: &Model,
    truth: &Tensor4D,
    input: Option<&PlaneStack>,
    pattern: Option<&CfaPattern>,
) -> Result<f64> {
    let out = model.infer(source(input, pattern, truth)?)?;
    Ok(l2_loss(&out, &loss_target(model, truth)?)?.0)
}

/// One optimization step; returns the batch loss before the update. The
/// pattern layer, if any, is projected onto `[0, 1]` afterwards.
pub fn train_step(
    model: &mut Model,
    opt: &mut Optimizer,
    truth: &Tensor4D,
    input: Option<&PlaneStack>,
    pattern: Option<&CfaPattern>,
) -> Result<f64> {
    model.zero_grad();
    let pass = model.forward(source(input, pattern, truth)?)?;
    let (loss, grad) = l2_loss(&pass.output, &loss_target(model, truth)?)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss {loss}")));
    }
    model.backward(&pass, &grad)?;
    opt.step(&mut model.params())?;
    if let Some(p) = &mut model.pattern {
        project_pattern_weights(p);
    }
    Ok(loss)
}

/// Mean CPSNR (peak 1.0) of `model` over `pairs`, evaluated in batches.
pub fn validation_cpsnr(
    model: &Model,
    pairs: &[PatchPair],
    pattern: Option<&CfaPattern>,
    batch_size: usize,
) -> Result<Option<f64>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (truth, input) = collate(pairs, chunk)?;
        let out = model.infer(source(input.as_ref(), pattern, &truth)?)?;
        let target = loss_target(model, &truth)?;
        for n in 0..chunk.len() {
            total += cpsnr(&out.select(n).clamp(0.0, 1.0), &target.select(n), 1.0, 0)?;
        }
    }
    Ok(Some(total / pairs.len() as f64))
}

/// Where a run keeps its state, and whether to pick up an earlier run.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub dir: PathBuf,
    pub resume: bool,
}

impl RunDir {
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join(CHECKPOINT_FILE)
    }

    pub fn optimizer(&self) -> PathBuf {
        self.dir.join(OPTIMIZER_FILE)
    }

    pub fn log(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }
}

/// Serialized optimizer state plus the iteration it belongs to.
pub fn encode_optimizer(opt: &Optimizer, iteration: usize) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(OPT_MAGIC);
    w.u32(OPT_VERSION);
    match opt.kind {
        OptimizerKind::SgdClip { clip } => {
            w.u8(0);
            w.f64(clip);
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            w.u8(1);
            w.f64s(&[beta1, beta2, eps]);
        }
    }
    w.f64(opt.lr);
    w.u64(opt.step);
    w.u64(iteration as u64);
    w.usize(opt.moments.len());
    for (m, v) in &opt.moments {
        w.usize(m.len());
        w.f64s(m);
        w.f64s(v);
    }
    w.buf
}

pub fn decode_optimizer(data: &[u8]) -> Result<(Optimizer, usize)> {
    let mut r = Reader::new(data, "optimizer state");
    if r.take(8)? != OPT_MAGIC {
        return Err(Error::Format("optimizer state: bad magic".into()));
    }
    let version = r.u32()?;
    if version != OPT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: OPT_VERSION,
        });
    }
    let kind = match r.u8()? {
        0 => OptimizerKind::SgdClip { clip: r.f64()? },
        1 => OptimizerKind::Adam {
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
        },
        t => return Err(Error::Format(format!("optimizer state: unknown kind {t}"))),
    };
    let mut opt = Optimizer::new(kind, r.f64()?);
    opt.step = r.u64()?;
    let iteration = r.u64()? as usize;
    let count = r.usize()?;
    for _ in 0..count {
        let len = r.usize()?;
        opt.moments.push((r.f64s(len)?, r.f64s(len)?));
    }
    r.finish()?;
    Ok((opt, iteration))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn save_state(
    run: &RunDir,
    model: &Model,
    opt: &Optimizer,
    it: usize,
    log: &TrainLog,
) -> Result<()> {
    save_weights(model, &run.checkpoint())?;
    write_file(&run.optimizer(), &encode_optimizer(opt, it))?;
    write_file(&run.log(), log.to_csv().as_bytes())
}

/// Restores model, optimizer, iteration, and log from `run` if a checkpoint
/// is present; log rows past the checkpoint are dropped.
pub fn restore(
    run: &RunDir,
    model: &mut Model,
    opt: &mut Optimizer,
) -> Result<Option<(usize, TrainLog)>> {
    if !run.checkpoint().exists() {
        return Ok(None);
    }
    let loaded = load_weights(&run.checkpoint())?;
    crate::models::check_compatible(model, &loaded)?;
    let bytes = std::fs::read(run.optimizer()).map_err(|e| Error::io(run.optimizer(), e))?;
    let (saved_opt, iteration) = decode_optimizer(&bytes)?;
    let text = std::fs::read_to_string(run.log()).map_err(|e| Error::io(run.log(), e))?;
    let mut log = TrainLog::parse_csv(&text)?;
    log.rows.retain(|r| r.iteration <= iteration);
    // Mode is runtime state; keep the caller's.
    let mode = model.layers.iter().find_map(|l| match l {
        crate::models::Layer::BatchNorm(b) => Some(b.mode),
        _ => None,
    });
    *model = loaded;
    if let Some(m) = mode {
        model.set_mode(m);
    }
    *opt = saved_opt;
    Ok(Some((iteration, log)))
}

/// Runs the minibatch loop from iteration 0 (or the checkpoint in `run`
/// when resuming) to `cfg.iterations`. `on_step` sees the model after every
/// update. A non-finite loss stops training; the offending model is saved as
/// a diagnostic checkpoint when `run` is given.
pub fn train(
    model: &mut Model,
    data: &TrainData,
    cfg: &TrainConfig,
    run: Option<&RunDir>,
    mut on_step: impl FnMut(usize, &Model, f64),
) -> Result<TrainLog> {
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut log = TrainLog::default();
    let mut start = 0;
    model.set_mode(NormMode::Train);
    if let Some(run) = run {
        std::fs::create_dir_all(&run.dir).map_err(|e| Error::io(&run.dir, e))?;
        if run.resume {
            if let Some((it, restored)) = restore(run, model, &mut opt)? {
                info!("resuming from iteration {it}");
                start = it;
                log = restored;
                opt.lr = cfg.lr;
            }
        }
    }
    let pattern = data.pattern.as_ref();
    if cfg.iterations > start {
        let mut batcher = Batcher::new(data.train.len(), cfg.batch_size, cfg.seed)?;
        for it in start..cfg.iterations {
            let items = batcher.batch(it);
            let (truth, input) = collate(&data.train, &items)?;
            let loss = match train_step(model, &mut opt, &truth, input.as_ref(), pattern) {
                Ok(l) => l,
                Err(Error::NonFinite(what)) => {
                    if let Some(run) = run {
                        let path = run.dir.join(DIVERGED_FILE);
                        save_weights(model, &path)?;
                        warn!("diagnostic checkpoint written to {}", path.display());
                    }
                    return Err(Error::NonFinite(format!("{what} at iteration {}", it + 1)));
                }
                Err(e) => return Err(e),
            };
            let done = it + 1;
            let val = if cfg.validate_every > 0 && done % cfg.validate_every == 0 {
                validation_cpsnr(model, &data.val, pattern, cfg.batch_size)?
            } else {
                None
            };
            log.rows.push(LogRow {
                iteration: done,
                loss,
                val_cpsnr: val,
            });
            on_step(done, model, loss);
            if done % 100 == 0 || done == cfg.iterations {
                info!("iteration {done}: loss {loss:.6e}");
            }
            if let Some(run) = run {
                if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
                    save_state(run, model, &opt, done, &log)?;
                }
            }
        }
    }
    if let Some(run) = run {
        save_state(run, model, &opt, cfg.iterations.max(start), &log)?;
    }
    Ok(log)
}
