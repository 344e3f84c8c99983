//! MLE training with SGD: length-bucketed batching, gradient clipping,
//! perplexity-based model selection, learning-rate decay on plateau, and a
//! one-retry NaN recovery policy.

mod ablation;
mod checkpoint;
mod pretrain;

pub use ablation::{ladder, run_ablation, AblationRow, AblationSetup, LadderRung};
pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use pretrain::{cosine_embedding_loss, pretrain_sentence_encoder, PretrainOutcome};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::IndexedExample;
use crate::model::QgModel;
use crate::params::ParamError;
use crate::tensor::{clip_gradients, sgd_step, Dtype, Graph};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite loss in epoch {epoch} batch {batch} (after one retry at half lr)")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("tensor store error: {0}")]
    Store(#[from] crate::tensor::store::StoreError),
    #[error("evaluation error: {0}")]
    Eval(#[from] crate::eval::EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty split: {0}")]
    EmptySplit(&'static str),
}

/// Checkpoint storage precision. Training always computes at 64-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> Dtype {
        match self {
            Precision::F32 => Dtype::F32,
            Precision::F64 => Dtype::F64,
        }
    }
}

/// How the sentence encoder enters training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceEncoderMode {
    Off,
    Scratch,
    Pretrained,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    /// Dev evaluations without improvement before the learning rate decays.
    pub patience: usize,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Stop after this many dev evaluations without improvement (used by
    /// the pre-training plateau rule); absent means run all epochs.
    #[serde(default)]
    pub early_stop_evals: Option<usize>,
    pub precision: Precision,
}

impl TrainConfig {
    pub fn paper(seed: u64) -> Self {
        TrainConfig {
            batch_size: 64,
            lr: 1.0,
            lr_decay: 0.5,
            patience: 1,
            clip_norm: 5.0,
            max_epochs: 20,
            seed,
            early_stop_evals: None,
            precision: Precision::F64,
        }
    }

    pub fn desk(seed: u64) -> Self {
        TrainConfig { batch_size: 8, max_epochs: 60, ..TrainConfig::paper(seed) }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("lr must be non-negative, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(TrainError::Config(format!(
                "lr_decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(TrainError::Config(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if self.max_epochs < 1 {
            return Err(TrainError::Config("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_ppl: f64,
    pub lr: f64,
    pub seconds: f64,
}

pub struct TrainOutcome {
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Seeded shuffle, stable sort by source length (bucketing), chunk into
/// batches, shuffle batch order.
pub(crate) fn make_batches(
    data: &[IndexedExample],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    idx.sort_by_key(|&i| data[i].src_len());
    let mut batches: Vec<Vec<usize>> = idx.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

/// Teacher-forced dev perplexity: `exp(total NLL / token count)` in eval
/// mode.
pub fn perplexity(g: &mut Graph, model: &QgModel, data: &[IndexedExample]) -> f64 {
    assert!(!data.is_empty(), "perplexity over an empty dataset");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in data {
        g.reset();
        let (nll, c) = model.example_nll(g, ex, false, &mut rng);
        total += g.scalar_value(nll);
        count += c;
    }
    g.reset();
    (total / count as f64).exp()
}

/// Teacher-forced token accuracy over a dataset (eval mode).
pub fn token_accuracy(g: &mut Graph, model: &QgModel, data: &[IndexedExample]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut correct = 0usize;
    let mut count = 0usize;
    for ex in data {
        g.reset();
        let (_, c, ok) = model.teacher_forced_stats(g, ex, &mut rng);
        correct += ok;
        count += c;
    }
    g.reset();
    correct as f64 / count as f64
}

/// Runs the SGD training loop and returns the checkpoint of lowest dev
/// perplexity plus the per-epoch log.
pub fn train(
    g: &mut Graph,
    model: &QgModel,
    train_data: &[IndexedExample],
    dev_data: &[IndexedExample],
    config: &TrainConfig,
    vocab_hash: &str,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if dev_data.is_empty() {
        return Err(TrainError::EmptySplit("dev"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = model.registry.trainable();
    let mut lr = config.lr;
    let mut best: Option<(Checkpoint, usize)> = None;
    let mut best_ppl = f64::INFINITY;
    let mut decay_counter = 0usize;
    let mut stop_counter = 0usize;
    let mut nan_retry_used = false;
    let mut log = Vec::new();

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let batches = make_batches(train_data, config.batch_size, &mut rng);
        let mut loss_sum = 0.0;
        let mut token_sum = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let (loss, tokens) = run_batch(
                g,
                model,
                train_data,
                batch,
                &params,
                config,
                &mut lr,
                &mut nan_retry_used,
                epoch,
                bi,
                &mut rng,
            )?;
            loss_sum += loss * tokens as f64;
            token_sum += tokens;
        }
        let train_loss = loss_sum / token_sum as f64;
        let dev_ppl = perplexity(g, model, dev_data);
        if dev_ppl < best_ppl {
            best_ppl = dev_ppl;
            decay_counter = 0;
            stop_counter = 0;
            let ckpt = Checkpoint {
                meta: CheckpointMeta {
                    version: CHECKPOINT_VERSION,
                    component: "full_model".into(),
                    model_config: model.config.clone(),
                    train_config: config.clone(),
                    epoch,
                    dev_ppl,
                    rng_state: rng.clone(),
                    vocab_hash: vocab_hash.to_string(),
                },
                tensors: model.registry.export(g, config.precision.dtype()),
            };
            best = Some((ckpt, epoch));
        } else {
            decay_counter += 1;
            stop_counter += 1;
            if decay_counter >= config.patience {
                lr *= config.lr_decay;
                decay_counter = 0;
            }
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            dev_ppl,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(stop) = config.early_stop_evals {
            if stop_counter >= stop {
                break;
            }
        }
    }
    let (best, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { best, best_epoch, log })
}

#[allow(clippy::too_many_arguments)]
fn run_batch(
    g: &mut Graph,
    model: &QgModel,
    data: &[IndexedExample],
    batch: &[usize],
    params: &[crate::tensor::TensorRef],
    config: &TrainConfig,
    lr: &mut f64,
    nan_retry_used: &mut bool,
    epoch: usize,
    batch_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize), TrainError> {
    loop {
        g.reset();
        let mut sums = Vec::with_capacity(batch.len());
        let mut count = 0usize;
        for &i in batch {
            let (s, c) = model.example_nll(g, &data[i], true, rng);
            sums.push(s);
            count += c;
        }
        let cat = g.concat(&sums, 1);
        let total = g.sum(cat);
        let inv = g.scalar(1.0 / count as f64);
        let loss = g.mul(total, inv);
        let loss_val = g.scalar_value(loss);
        if loss_val.is_finite() {
            g.backward(loss);
            clip_gradients(g, params, config.clip_norm);
            sgd_step(g, params, *lr);
            g.zero_grads();
            g.reset();
            return Ok((loss_val, count));
        }
        // NaN recovery: one retry at half lr (fresh dropout masks), then
        // abort with the batch id
        if *nan_retry_used {
            return Err(TrainError::NonFiniteLoss { epoch, batch: batch_index });
        }
        *nan_retry_used = true;
        *lr *= 0.5;
        g.zero_grads();
    }
}

#[cfg(test)]
mod tests;
