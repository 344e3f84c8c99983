//! Two-step sentence-encoder pre-training.
//!
//! Step 1 trains a full QG model whose sentence encoder reads the gold
//! question instead of the sentence; it converges fast because it cheats.
//! That encoder is frozen and emits a target embedding `q` for every
//! example's question. Step 2 trains a fresh sentence encoder reading the
//! feature-annotated declarative sentence to minimize
//! `loss(s, q) = 1 - cos(s, q)`, each answer span paired with its own gold
//! question's embedding. The step-2 weights initialize the full model's
//! sentence encoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::IndexedExample;
use crate::model::{ModelConfig, QgModel, SentenceInput};
use crate::tensor::{clip_gradients, sgd_step, Graph, Tensor, TensorRef};

use super::checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
use super::{train, EpochLog, TrainConfig, TrainError};

/// Norm floor that keeps the cosine defined for zero-norm embeddings.
pub const COSINE_EPS: f64 = 1e-8;

/// Prefix of every sentence-encoder parameter in the registry.
pub const SENTENCE_PREFIX: &str = "encoder.sent_lstm";

/// `1 - cos(s, q)` on the graph, with `q` a fixed target vector. The
/// denominator uses `sqrt(|s|^2 + eps^2) * max(|q|, eps)`, which keeps the
/// loss defined at zero norm and exact to well under 1e-9 at the identical
/// / orthogonal / opposite reference points.
pub fn cosine_embedding_loss(g: &mut Graph, s: TensorRef, q: &[f64]) -> TensorRef {
    let (rows, d) = g.shape(s);
    assert_eq!(rows, 1, "embedding must be a row vector");
    assert_eq!(d, q.len(), "embedding width {} != target width {}", d, q.len());
    let q_norm = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(COSINE_EPS);
    let q_col = g.constant(Tensor::new(vec![d, 1], q.to_vec()));
    let dot = g.matmul(s, q_col);
    let ss = g.mul(s, s);
    let sumsq = g.sum(ss);
    let eps2 = g.scalar(COSINE_EPS * COSINE_EPS);
    let safe = g.add(sumsq, eps2);
    let s_norm = g.sqrt(safe);
    let qn = g.scalar(q_norm);
    let denom = g.mul(s_norm, qn);
    let cos = g.div(dot, denom);
    let one = g.scalar(1.0);
    g.sub(one, cos)
}

/// One epoch line of the step-2 log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step2Log {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub seconds: f64,
}

pub struct PretrainOutcome {
    /// Sentence-encoder weights of the best step-2 epoch, saved under
    /// component `sentence_encoder`.
    pub checkpoint: Checkpoint,
    pub step1_log: Vec<EpochLog>,
    pub step2_log: Vec<Step2Log>,
    /// Every step-2 training batch loss, in order (each lies in [0, 2]).
    pub step2_batch_losses: Vec<f64>,
}

/// Runs both pre-training steps. `final_config` is the configuration the
/// full model will train under (sentence encoder on, reading sentences);
/// the same seed must be passed to the final training run so the step-2
/// encoder initializes the identical model.
pub fn pretrain_sentence_encoder(
    train_data: &[IndexedExample],
    dev_data: &[IndexedExample],
    final_config: &ModelConfig,
    config: &TrainConfig,
    vocab_hash: &str,
) -> Result<PretrainOutcome, TrainError> {
    config.validate()?;
    assert!(
        final_config.use_sentence_encoder,
        "pre-training requires the sentence encoder to be enabled"
    );
    if train_data.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if dev_data.is_empty() {
        return Err(TrainError::EmptySplit("dev"));
    }

    // step 1: the cheat model reads the gold question through its
    // sentence encoder and trains to a dev-perplexity plateau
    let mut g1 = Graph::new();
    let cheat_config = ModelConfig {
        sentence_input: SentenceInput::Question,
        ..final_config.clone()
    };
    let mut cheat_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5e1f_c0de));
    let cheat = QgModel::init(&mut g1, cheat_config, &mut cheat_rng, None, None);
    let step1_cfg = TrainConfig { early_stop_evals: Some(2), ..config.clone() };
    let outcome = train(&mut g1, &cheat, train_data, dev_data, &step1_cfg, vocab_hash)?;
    cheat.registry.import(&mut g1, &outcome.best.tensors)?;

    // frozen question embeddings, one per example
    let mut eval_rng = ChaCha8Rng::seed_from_u64(0);
    let mut embed = |data: &[IndexedExample], g: &mut Graph| -> Vec<Vec<f64>> {
        data.iter()
            .map(|ex| {
                g.reset();
                let s = cheat.sentence_embedding_only(g, ex, false, &mut eval_rng);
                g.values(s).to_vec()
            })
            .collect()
    };
    let train_q = embed(train_data, &mut g1);
    let dev_q = embed(dev_data, &mut g1);

    // step 2: fresh model, initialized exactly as the final training run
    // will be (same seed and config); only sentence-encoder parameters
    // update
    let mut g2 = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = QgModel::init(&mut g2, final_config.clone(), &mut rng, None, None);
    let sent_params = model.registry.trainable_prefixed(SENTENCE_PREFIX);
    assert!(!sent_params.is_empty());

    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_tensors = None;
    let mut stop_counter = 0usize;
    let mut step2_log = Vec::new();
    let mut step2_batch_losses = Vec::new();
    let mut lr = config.lr;

    for epoch in 1..=config.max_epochs {
        let start = std::time::Instant::now();
        let batches = super::make_batches(train_data, config.batch_size, &mut rng);
        let mut loss_sum = 0.0;
        let mut n = 0usize;
        for batch in &batches {
            g2.reset();
            let losses: Vec<TensorRef> = batch
                .iter()
                .map(|&i| {
                    let s = model.sentence_embedding_only(&mut g2, &train_data[i], true, &mut rng);
                    cosine_embedding_loss(&mut g2, s, &train_q[i])
                })
                .collect();
            let cat = g2.concat(&losses, 1);
            let total = g2.sum(cat);
            let inv = g2.scalar(1.0 / batch.len() as f64);
            let loss = g2.mul(total, inv);
            let loss_val = g2.scalar_value(loss);
            step2_batch_losses.push(loss_val);
            loss_sum += loss_val * batch.len() as f64;
            n += batch.len();
            g2.backward(loss);
            clip_gradients(&mut g2, &sent_params, config.clip_norm);
            sgd_step(&mut g2, &sent_params, lr);
            g2.zero_grads();
        }
        g2.reset();
        let train_loss = loss_sum / n as f64;
        let mut dev_rng = ChaCha8Rng::seed_from_u64(0);
        let mut dev_sum = 0.0;
        for (ex, q) in dev_data.iter().zip(&dev_q) {
            g2.reset();
            let s = model.sentence_embedding_only(&mut g2, ex, false, &mut dev_rng);
            let l = cosine_embedding_loss(&mut g2, s, q);
            dev_sum += g2.scalar_value(l);
        }
        g2.reset();
        let dev_loss = dev_sum / dev_data.len() as f64;
        if dev_loss < best_loss {
            best_loss = dev_loss;
            best_epoch = epoch;
            best_tensors =
                Some(model.registry.export_prefixed(&g2, config.precision.dtype(), SENTENCE_PREFIX));
            stop_counter = 0;
        } else {
            stop_counter += 1;
            if stop_counter >= config.patience {
                lr *= config.lr_decay;
            }
            // plateau rule: stop after two evaluations without improvement
            if stop_counter >= 2 {
                step2_log.push(Step2Log {
                    epoch,
                    train_loss,
                    dev_loss,
                    seconds: start.elapsed().as_secs_f64(),
                });
                break;
            }
        }
        step2_log.push(Step2Log { epoch, train_loss, dev_loss, seconds: start.elapsed().as_secs_f64() });
    }

    let checkpoint = Checkpoint {
        meta: CheckpointMeta {
            version: CHECKPOINT_VERSION,
            component: "sentence_encoder".into(),
            model_config: final_config.clone(),
            train_config: config.clone(),
            epoch: best_epoch,
            dev_ppl: best_loss,
            rng_state: rng,
            vocab_hash: vocab_hash.to_string(),
        },
        tensors: best_tensors.expect("at least one epoch ran"),
    };
    Ok(PretrainOutcome {
        checkpoint,
        step1_log: outcome.log,
        step2_log,
        step2_batch_losses,
    })
}
