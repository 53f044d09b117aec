//! Multi-task training loop with best-validation checkpoint selection.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{check_compatible, Checkpoint, BEST_CHECKPOINT};
use crate::data::{BalancedSampler, Dataset, Split};
use crate::error::{Error, Result};
use crate::losses::{total_loss_on_tape, LossBreakdown, LossWeights};
use crate::model::{forward_full_on_tape, AudioInput, ModelConfig, ModelParams};
use crate::numcore::{AdamWConfig, AdamWState, Matrix, Mode, Scalar, Tape};

pub const TRAIN_LOG_FILE: &str = "train_log.json";
pub const TIMINGS_FILE: &str = "timings.json";

const INIT_STREAM: u64 = 0;
const SAMPLER_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub train_alpha: f64,
    pub temperature: f64,
    pub seed: u64,
    pub loss_weights: LossWeights,
    /// Where `best.ckpt` and the logs go; nothing is written when unset.
    #[serde(skip)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            weight_decay: AdamWConfig::default().weight_decay,
            train_alpha: 0.5,
            temperature: 0.1,
            seed: 0,
            loss_weights: LossWeights::default(),
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.train_alpha) {
            return Err(Error::Config(format!("train_alpha {} outside [0, 1]", self.train_alpha)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate {} must be finite and non-negative", self.learning_rate)));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Independent generator for one purpose, derived from the master seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch with the lowest validation total.
    pub best_epoch: usize,
    /// Kept out of the serialized log so that logs compare byte for byte.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl TrainLog {
    pub fn best(&self) -> &EpochLog {
        &self.epochs[self.best_epoch - 1]
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub best: Checkpoint<T>,
    pub log: TrainLog,
}

/// One batch of aligned features.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub audio: AudioInput<T>,
    pub video: Matrix<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn gather(data: &Dataset, rows: &[usize]) -> Self {
        Self {
            audio: data.audio_batch(rows),
            video: data.video_batch(rows),
            labels: data.labels(rows),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Loss of one batch and, in train mode, the gradient of every parameter.
pub fn loss_and_gradients<T: Scalar>(
    params: &ModelParams<T>,
    batch: &Batch<T>,
    config: &TrainConfig,
    mode: Mode,
    dropout_rng: &mut ChaCha8Rng,
    with_grads: bool,
) -> Result<(LossBreakdown, Option<Vec<Matrix<T>>>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let alpha = T::lit(config.train_alpha);
    let emb = forward_full_on_tape(&mut tape, params, &vars, &batch.audio, &batch.video, alpha, mode, dropout_rng)?;
    let losses = total_loss_on_tape(
        &mut tape,
        &emb,
        &batch.labels,
        T::lit(config.temperature),
        &config.loss_weights,
    )?;
    let breakdown = losses.breakdown(&tape);
    if !with_grads || !breakdown.total.is_finite() {
        return Ok((breakdown, None));
    }
    let grads = tape.backward(losses.total)?;
    let per_param = vars
        .iter()
        .zip(&params.tensors)
        .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
        .collect();
    Ok((breakdown, Some(per_param)))
}

/// Prefixes numerical errors with where in training they happened.
fn locate(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Degenerate(m) => Error::Degenerate(format!("epoch {epoch}, batch {batch}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("epoch {epoch}, batch {batch}: {m}")),
        other => other,
    }
}

fn check_finite(b: &LossBreakdown, epoch: usize, batch: usize) -> Result<()> {
    let bad = b
        .components()
        .into_iter()
        .chain([("total", b.total)])
        .find(|(_, v)| !v.is_finite());
    match bad {
        Some((component, _)) => Err(Error::NonFiniteLoss {
            epoch,
            batch,
            component: component.to_string(),
        }),
        None => Ok(()),
    }
}

/// Eval-mode loss over `rows` in sequential batches, size-weighted.
pub fn evaluate_loss<T: Scalar>(
    params: &ModelParams<T>,
    data: &Dataset,
    rows: &[usize],
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    // Eval mode never draws from the generator.
    let mut unused = rng_stream(0, DROPOUT_STREAM);
    let mut parts = Vec::new();
    for chunk in rows.chunks(config.batch_size.max(1)) {
        let batch = Batch::gather(data, chunk);
        let (b, _) = loss_and_gradients(params, &batch, config, Mode::Eval, &mut unused, false)?;
        parts.push((b, chunk.len()));
    }
    Ok(LossBreakdown::weighted_mean(&parts))
}

/// Eval-mode loss of a checkpoint over one split, at its training α.
pub fn validate<T: Scalar>(checkpoint: &Checkpoint<T>, data: &Dataset, split: Split) -> Result<LossBreakdown> {
    checkpoint.check_compatible(&data.manifest.header)?;
    let rows = data.manifest.split_rows(split);
    if rows.is_empty() {
        return Err(Error::Config(format!("split {split} is empty")));
    }
    evaluate_loss(&checkpoint.params, data, &rows, &checkpoint.meta.train)
}

/// Trains from a seeded initialization and keeps the best-validation
/// parameters. When `config.checkpoint_dir` is set, writes `best.ckpt`,
/// `train_log.json` and `timings.json` there.
pub fn train<T: Scalar>(data: &Dataset, model: &ModelConfig, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    config.validate()?;
    model.validate()?;
    check_compatible(model, &data.manifest.header)?;
    let val_rows = data.manifest.split_rows(Split::Val);
    if val_rows.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let sampler = BalancedSampler::new(&data.manifest, Split::Train).map_err(|e| match e {
        Error::Sampling(m) => Error::Config(m),
        other => other,
    })?;

    let mut params = ModelParams::<T>::init(model, &mut rng_stream(config.seed, INIT_STREAM))?;
    let mut optimizer = AdamWState::new(config.adamw(), &params.tensors)?;
    let mut sampler_rng = rng_stream(config.seed, SAMPLER_STREAM);
    let mut dropout_rng = rng_stream(config.seed, DROPOUT_STREAM);
    let batches = sampler.batches_per_epoch(config.batch_size);

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut epoch_seconds = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Checkpoint<T>)> = None;
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut parts = Vec::with_capacity(batches);
        for b in 0..batches {
            let rows = sampler.sample(config.batch_size, &mut sampler_rng);
            let batch = Batch::gather(data, &rows);
            let (loss, grads) = loss_and_gradients(&params, &batch, config, Mode::Train, &mut dropout_rng, true)
                .map_err(|e| locate(e, epoch, b + 1))?;
            check_finite(&loss, epoch, b + 1)?;
            let grads = grads.expect("finite loss yields gradients");
            optimizer.step(&mut params.tensors, &grads)?;
            parts.push((loss, rows.len()));
        }
        let train_loss = LossBreakdown::weighted_mean(&parts);
        let val_loss = evaluate_loss(&params, data, &val_rows, config)?;
        // Batch 0 marks the validation pass.
        check_finite(&val_loss, epoch, 0)?;
        if best.as_ref().is_none_or(|(v, _)| val_loss.total < *v) {
            let ckpt = Checkpoint::new(params.clone(), config.clone(), epoch, Some(optimizer.clone()));
            best = Some((val_loss.total, ckpt));
        }
        epochs.push(EpochLog {
            epoch,
            train: train_loss,
            val: val_loss,
        });
        epoch_seconds.push(started.elapsed().as_secs_f64());
    }

    let (_, best) = best.expect("at least one epoch");
    let log = TrainLog {
        best_epoch: best.meta.epoch,
        epochs,
        epoch_seconds,
    };
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        best.save(&dir.join(BEST_CHECKPOINT))?;
        std::fs::write(dir.join(TRAIN_LOG_FILE), serde_json::to_string_pretty(&log)? + "\n")?;
        std::fs::write(
            dir.join(TIMINGS_FILE),
            serde_json::to_string_pretty(&serde_json::json!({ "epoch_seconds": log.epoch_seconds }))? + "\n",
        )?;
    }
    Ok(TrainOutcome { best, log })
}
