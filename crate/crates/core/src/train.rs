//! Chunk-level and song-level training with validation-based model
//! selection, 16-chunk prediction averaging and split evaluation.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tagbench_autodiff::optim::ScheduleEvent;
use tagbench_autodiff::{checkpoint, no_grad, ops, Ctx, OptimizerConfig, OptimizerState, Phase, Tensor};

use crate::audio::AudioClip;
use crate::datasets::{Manifest, ManifestEntry, Split};
use crate::deform::Deformation;
use crate::error::{Error, Result};
use crate::metrics::per_tag;
use crate::models::{Model, ModelConfig};
use crate::report::EvalReport;

/// Chunks averaged per clip at prediction time.
pub const EVAL_CHUNKS: usize = 16;

/// Chunks per forward pass during prediction; bounds activation memory for
/// long-window models.
const PREDICT_BATCH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    ChunkLevel,
    SongLevel,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::ChunkLevel => "chunk_level",
            TrainMode::SongLevel => "song_level",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// `None` picks the mode from the arch and clip lengths.
    pub mode: Option<TrainMode>,
    pub adam_lr: f32,
    pub sgd_lr: f32,
    pub patience: usize,
    pub lr_decay: f32,
    pub max_decays: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        TrainConfig {
            batch_size: 16,
            max_epochs: 200,
            seed: 0,
            mode: None,
            adam_lr: o.adam_lr,
            sgd_lr: o.sgd_lr,
            patience: o.patience,
            lr_decay: o.decay,
            max_decays: o.max_decays,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and max_epochs must be positive".into()));
        }
        let positive = |v: f32| v.is_finite() && v > 0.0;
        if !positive(self.adam_lr) || !positive(self.sgd_lr) || !positive(self.lr_decay) || self.patience == 0 {
            return Err(Error::InvalidConfig("learning rates, decay and patience must be positive".into()));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            adam_lr: self.adam_lr,
            sgd_lr: self.sgd_lr,
            patience: self.patience,
            decay: self.lr_decay,
            max_decays: self.max_decays,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Optimizer phase and learning rate the epoch trained with.
    pub phase: Phase,
    pub lr: f32,
}

pub fn history_tsv(history: &[HistoryRow]) -> String {
    let mut out = String::from("epoch\ttrain_loss\tval_loss\tphase\tlr\n");
    for h in history {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", h.epoch, h.train_loss, h.val_loss, h.phase.as_str(), h.lr);
    }
    out
}

/// JSON written next to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub arch: String,
    pub model_id: String,
    pub config: ModelConfig,
    pub epoch: usize,
    pub val_loss: f64,
    pub seed: u64,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

pub fn save_checkpoint(model: &Model, path: &Path, meta: &CheckpointMeta) -> Result<()> {
    checkpoint::save(&model.params, path)?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

/// Rebuilds the model described by the sidecar and loads its weights.
pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let side = sidecar_path(path);
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    if !side.exists() {
        return Err(Error::MissingFile(side));
    }
    let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(&side)?)?;
    let model = Model::build(&meta.config, meta.seed)?;
    checkpoint::load(&model.params, path)?;
    Ok((model, meta))
}

#[derive(Debug)]
pub struct TrainRun {
    /// Holds the best validation weights once training returns.
    pub model: Model,
    pub optimizer: OptimizerState,
    pub history: Vec<HistoryRow>,
    pub best_checkpoint: PathBuf,
    pub best_epoch: usize,
    pub mode: TrainMode,
    pub rng_seed: u64,
    pub steps: u64,
}

/// 1-based epoch of the first minimum.
pub fn select_best(val_losses: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in val_losses.iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i + 1, v));
        }
    }
    best.map(|b| b.0)
}

/// Song-level when the arch is song-level and every clip fits its window.
pub fn resolve_mode(config: &ModelConfig, requested: Option<TrainMode>, longest_clip: usize) -> Result<TrainMode> {
    let natural = if config.arch.song_level() && longest_clip <= config.input_length {
        TrainMode::SongLevel
    } else {
        TrainMode::ChunkLevel
    };
    match requested {
        Some(m) if m != natural => Err(Error::ModeMismatch(format!(
            "{} with {}-sample clips trains {}, not {}",
            config.arch,
            longest_clip,
            natural.as_str(),
            m.as_str()
        ))),
        _ => Ok(natural),
    }
}

/// `length` samples from `start`, zero-padded past the end.
fn window(x: &[f32], start: usize, length: usize) -> Cow<'_, [f32]> {
    if start + length <= x.len() {
        Cow::Borrowed(&x[start..start + length])
    } else {
        let mut v = vec![0.0; length];
        let avail = x.len().saturating_sub(start).min(length);
        if avail > 0 {
            v[..avail].copy_from_slice(&x[start..start + avail]);
        }
        Cow::Owned(v)
    }
}

struct Example {
    samples: Vec<f32>,
    labels: Vec<f32>,
}

fn load_split(manifest: &Manifest, split: Split) -> Result<Vec<Example>> {
    manifest
        .split(split)
        .into_iter()
        .map(|e| {
            Ok(Example {
                samples: manifest.load_audio(e)?.into_samples(),
                labels: e.tags.iter().map(|&b| b as u8 as f32).collect(),
            })
        })
        .collect()
}

/// Window length and start for one example. Song-level windows cover the
/// clip from its start, capped at the model's input length.
fn example_window(mode: TrainMode, l: usize, batch_len: usize, clip_len: usize, start: usize) -> (usize, usize) {
    match mode {
        TrainMode::ChunkLevel => (start.min(clip_len.saturating_sub(l)), l),
        TrainMode::SongLevel => (0, batch_len),
    }
}

fn batch_tensors(
    model: &Model,
    examples: &[&Example],
    starts: &[usize],
    mode: TrainMode,
) -> Result<(Tensor, Tensor)> {
    let l = model.config.input_length;
    let batch_len = examples.iter().map(|e| e.samples.len()).max().unwrap_or(0).min(l);
    let chunks: Vec<Cow<'_, [f32]>> = examples
        .iter()
        .zip(starts)
        .map(|(e, &s)| {
            let (start, len) = example_window(mode, l, batch_len, e.samples.len(), s);
            window(&e.samples, start, len)
        })
        .collect();
    let refs: Vec<&[f32]> = chunks.iter().map(|c| c.as_ref()).collect();
    let x = model.prepare(&refs)?;
    let n_tags = model.config.n_tags;
    let y: Vec<f32> = examples.iter().flat_map(|e| e.labels.iter().copied()).collect();
    Ok((x, Tensor::new(&[examples.len(), n_tags], y)?))
}

fn validation_loss(model: &Model, val: &[Example], batch: usize, mode: TrainMode) -> Result<f64> {
    let l = model.config.input_length;
    let mut total = 0.0;
    for group in val.chunks(batch) {
        let refs: Vec<&Example> = group.iter().collect();
        // centre chunk: deterministic across epochs
        let starts: Vec<usize> = refs.iter().map(|e| e.samples.len().saturating_sub(l) / 2).collect();
        let (x, y) = batch_tensors(model, &refs, &starts, mode)?;
        let loss = no_grad(|| -> Result<f32> {
            let logits = model.forward(&x, &mut Ctx::eval())?;
            Ok(ops::bce_with_logits(&logits, &y)?.item())
        })?;
        total += loss as f64 * group.len() as f64;
    }
    Ok(total / val.len() as f64)
}

/// Trains `model` on the manifest's train split, selecting weights by
/// validation loss. The best checkpoint and its sidecar go to
/// `out_dir/best.ckpt` and `out_dir/best.json`.
pub fn train(model: Model, manifest: &Manifest, config: &TrainConfig, out_dir: &Path) -> Result<TrainRun> {
    train_observed(model, manifest, config, out_dir, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_observed(
    model: Model,
    manifest: &Manifest,
    config: &TrainConfig,
    out_dir: &Path,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<TrainRun> {
    config.validate()?;
    manifest.require_training_ready()?;
    if manifest.tag_vocab.len() != model.config.n_tags {
        return Err(Error::InvalidConfig(format!(
            "manifest has {} tags, model predicts {}",
            manifest.tag_vocab.len(),
            model.config.n_tags
        )));
    }
    let train_set = load_split(manifest, Split::Train)?;
    let val_set = load_split(manifest, Split::Valid)?;
    let longest = train_set.iter().chain(&val_set).map(|e| e.samples.len()).max().unwrap_or(0);
    let mode = resolve_mode(&model.config, config.mode, longest)?;
    std::fs::create_dir_all(out_dir)?;
    let best_checkpoint = out_dir.join("best.ckpt");

    let l = model.config.input_length;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = OptimizerState::new(config.optimizer());
    let mut history = Vec::new();
    let mut best = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let (phase, lr) = (optimizer.phase, optimizer.learning_rate);
        order.shuffle(&mut rng);
        let starts: Vec<usize> = train_set
            .iter()
            .map(|e| rng.random_range(0..=e.samples.len().saturating_sub(l)))
            .collect();
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let examples: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            let chunk_starts: Vec<usize> = idx.iter().map(|&i| starts[i]).collect();
            let (x, y) = batch_tensors(&model, &examples, &chunk_starts, mode)?;
            model.params.zero_grad();
            let mut ctx = Ctx::train(rng.random());
            let loss = ops::bce_with_logits(&model.forward(&x, &mut ctx)?, &y)?;
            loss.backward()?;
            optimizer.step(&model.params);
            total += loss.item() as f64 * idx.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = validation_loss(&model, &val_set, config.batch_size, mode)?;
        let row = HistoryRow { epoch, train_loss, val_loss, phase, lr };
        on_epoch(&row);
        history.push(row);

        let event = optimizer.schedule_update(val_loss);
        if event == ScheduleEvent::Improved {
            let meta = CheckpointMeta {
                arch: model.config.arch.to_string(),
                model_id: model.config.model_id(),
                config: model.config.clone(),
                epoch,
                val_loss,
                seed: config.seed,
            };
            save_checkpoint(&model, &best_checkpoint, &meta)?;
            best = Some((epoch, checkpoint::snapshot(&model.params)));
        }
        if event == ScheduleEvent::Exhausted {
            break;
        }
    }
    model.params.zero_grad();
    let (best_epoch, weights) = best.ok_or_else(|| Error::InvalidConfig("validation loss never finite".into()))?;
    checkpoint::restore(&model.params, &weights)?;
    Ok(TrainRun {
        model,
        steps: optimizer.step_count,
        optimizer,
        history,
        best_checkpoint,
        best_epoch,
        mode,
        rng_seed: config.seed,
    })
}

/// Start offsets of the evaluation chunks: `round(i·(len − L)/15)`.
pub fn chunk_starts(len: usize, input_length: usize) -> [usize; EVAL_CHUNKS] {
    let span = len.saturating_sub(input_length) as f64;
    std::array::from_fn(|i| (i as f64 * span / (EVAL_CHUNKS - 1) as f64).round() as usize)
}

/// Tag probabilities for one 16 kHz clip: the mean sigmoid over the
/// evaluation windows, accumulated in `f64` in chunk order.
pub fn predict_clip(model: &Model, clip: &AudioClip) -> Result<Vec<f64>> {
    if clip.sample_rate() != crate::SAMPLE_RATE {
        return Err(Error::WrongSampleRate { expected: crate::SAMPLE_RATE, found: clip.sample_rate() });
    }
    let x = clip.samples();
    let l = model.config.input_length;
    // a song-level model sees a short clip whole, as in training
    let starts: Vec<usize> = if model.config.arch.song_level() && x.len() <= l {
        vec![0]
    } else {
        chunk_starts(x.len(), l).to_vec()
    };
    let span = if starts.len() == 1 { x.len().min(l).max(1) } else { l };
    // identical windows (short clips) run once
    let mut unique = starts.clone();
    unique.dedup();
    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(unique.len());
    for group in unique.chunks(PREDICT_BATCH) {
        let chunks: Vec<Cow<'_, [f32]>> = group.iter().map(|&s| window(x, s, span)).collect();
        let refs: Vec<&[f32]> = chunks.iter().map(|c| c.as_ref()).collect();
        let input = model.prepare(&refs)?;
        let logits = no_grad(|| model.forward(&input, &mut Ctx::eval()))?.to_vec();
        probs.extend(
            logits
                .chunks(model.config.n_tags)
                .map(|row| row.iter().map(|&z| 1.0 / (1.0 + (-(z as f64)).exp())).collect()),
        );
    }
    // weighted by multiplicity, in start order
    let mut sum = vec![0.0f64; model.config.n_tags];
    for (u, p) in unique.iter().zip(&probs) {
        let count = starts.iter().filter(|&s| s == u).count() as f64;
        sum.iter_mut().zip(p).for_each(|(acc, v)| *acc += count * v);
    }
    let n = starts.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Worker threads for evaluation: `TAGBENCH_THREADS` when set to a
/// positive integer, otherwise the available parallelism.
pub fn worker_threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var("TAGBENCH_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available)
}

/// Builds a report from per-clip scores (clip-major) for the entries of a
/// split.
pub fn report_from_scores(
    model_id: &str,
    manifest: &Manifest,
    split: Split,
    deformation: &Deformation,
    entries: &[&ManifestEntry],
    scores: &[Vec<f64>],
) -> Result<EvalReport> {
    let labels: Vec<Vec<bool>> = entries.iter().map(|e| e.tags.clone()).collect();
    let metrics = per_tag(scores, &labels)?;
    EvalReport::from_metrics(
        model_id,
        &manifest.dataset_id,
        split.as_str(),
        &deformation.to_string(),
        &manifest.tag_vocab,
        &metrics,
        entries.len(),
    )
}

/// Scores every clip of `split` (optionally deformed first) and computes
/// per-tag and macro metrics. Clips fan out over [`worker_threads`]
/// workers; results are gathered in manifest order.
pub fn evaluate(
    model: &Model,
    manifest: &Manifest,
    split: Split,
    deformation: Option<&Deformation>,
    seed: u64,
) -> Result<EvalReport> {
    let entries = manifest.split(split);
    if entries.is_empty() {
        return Err(Error::EmptySplit(split.as_str().into()));
    }
    if manifest.tag_vocab.len() != model.config.n_tags {
        return Err(Error::InvalidConfig(format!(
            "manifest has {} tags, model predicts {}",
            manifest.tag_vocab.len(),
            model.config.n_tags
        )));
    }
    let score = |e: &&ManifestEntry| -> Result<Vec<f64>> {
        let clip = manifest.load_audio(e)?;
        let clip = match deformation {
            Some(d) if *d != Deformation::None => d.apply(&clip, seed)?,
            _ => clip,
        };
        predict_clip(model, &clip)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let scores: Vec<Vec<f64>> = pool.install(|| entries.par_iter().map(score).collect::<Result<_>>())?;
    report_from_scores(
        &model.config.model_id(),
        manifest,
        split,
        deformation.unwrap_or(&Deformation::None),
        &entries,
        &scores,
    )
}
