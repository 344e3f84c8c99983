use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{build_vocab, encode_example, tokenize, AnnotatedSentence, QgExample, Vocab};
use crate::encoder::{EncoderConfig, FeatureToggles};
use crate::model::{ModelConfig, QgModel, SentenceInput};
use crate::tensor::Tensor;

fn example(text: &str, question: &str, span: (usize, usize)) -> QgExample {
    let mut ex = QgExample {
        sentence: AnnotatedSentence { tokens: tokenize(text), doc_id: "d".into(), sent_index: 0 },
        answer_span: span,
        question: tokenize(question).iter().map(|t| t.lower.clone()).collect(),
        answer_text: String::new(),
    };
    ex.apply_answer_bits();
    ex
}

/// Eight examples over a tiny closed vocabulary; two sentences, four
/// questions each keyed by different answer spans.
fn mini_corpus() -> (Vec<crate::corpus::IndexedExample>, Vocab, Vocab) {
    let raw = vec![
        example("ada was born in london in 1815 .", "who was born in london ?", (0, 1)),
        example("ada was born in london in 1815 .", "where was ada born ?", (4, 5)),
        example("ada was born in london in 1815 .", "when was ada born ?", (6, 7)),
        example("ada was born in london in 1815 .", "what is the name of ada ?", (0, 1)),
        example("the river flows through paris today .", "what flows through paris ?", (1, 2)),
        example("the river flows through paris today .", "where does the river flow ?", (4, 5)),
        example("the river flows through paris today .", "when does the river flow ?", (5, 6)),
        example("the river flows through paris today .", "what is in paris ?", (1, 2)),
    ];
    let (src, tgt) = build_vocab(&raw, 1000, 1000);
    let examples = raw.iter().map(|ex| encode_example(ex, &src, &tgt)).collect();
    (examples, src, tgt)
}

fn tiny_model_config(src: &Vocab, tgt: &Vocab) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            word_dim: 8,
            hidden: 12,
            layers: 2,
            ner_emb_dim: 3,
            dropout: 0.0,
            features: FeatureToggles::all(),
        },
        use_copy: true,
        use_sentence_encoder: false,
        sentence_input: SentenceInput::Sentence,
        src_vocab_size: src.size(),
        tgt_vocab_size: tgt.size(),
    }
}

fn run_training(seed: u64, lr: f64, epochs: usize) -> (Vec<EpochLog>, TrainOutcome, Vec<f64>) {
    let (data, src, tgt) = mini_corpus();
    let config = TrainConfig {
        batch_size: 4,
        lr,
        max_epochs: epochs,
        seed,
        ..TrainConfig::desk(seed)
    };
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = QgModel::init(&mut g, tiny_model_config(&src, &tgt), &mut rng, None, None);
    let before: Vec<f64> = model
        .registry
        .trainable()
        .iter()
        .flat_map(|&p| g.values(p).to_vec())
        .collect();
    let outcome = train(&mut g, &model, &data, &data, &config, "hash").unwrap();
    let after: Vec<f64> = model
        .registry
        .trainable()
        .iter()
        .flat_map(|&p| g.values(p).to_vec())
        .collect();
    let changed: Vec<f64> = before
        .iter()
        .zip(&after)
        .map(|(b, a)| (b - a).abs())
        .collect();
    (outcome.log.clone(), outcome, changed)
}

#[test]
fn zero_lr_leaves_parameters_and_perplexity_constant() {
    let (log, _, deltas) = run_training(3, 0.0, 3);
    assert!(deltas.iter().all(|&d| d == 0.0), "no parameter may move at lr 0");
    let first = log[0].dev_ppl;
    assert!(log.iter().all(|e| (e.dev_ppl - first).abs() < 1e-12), "constant perplexity");
}

#[test]
fn training_loss_strictly_decreases_early() {
    let (log, _, _) = run_training(5, 0.5, 5);
    for w in log.windows(2) {
        assert!(
            w[1].train_loss < w[0].train_loss,
            "loss must fall in the first epochs: {} -> {}",
            w[0].train_loss,
            w[1].train_loss
        );
    }
}

#[test]
fn identical_seeds_reproduce_the_loss_trajectory() {
    let (log1, _, _) = run_training(7, 0.5, 4);
    let (log2, _, _) = run_training(7, 0.5, 4);

    for (a, b) in log1.iter().zip(&log2) {
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.dev_ppl.to_bits(), b.dev_ppl.to_bits());
    }
}

#[test]
fn selected_checkpoint_has_minimal_dev_ppl() {
    let (log, outcome, _) = run_training(11, 0.5, 6);
    for e in &log {
        assert!(outcome.best.meta.dev_ppl <= e.dev_ppl + 1e-15);
    }
    assert_eq!(outcome.best.meta.epoch, outcome.best_epoch);
}

#[test]
fn reloaded_checkpoint_reproduces_dev_ppl_bit_exactly() {
    let (data, src, tgt) = mini_corpus();
    let config = TrainConfig { batch_size: 4, max_epochs: 3, ..TrainConfig::desk(13) };
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = QgModel::init(&mut g, tiny_model_config(&src, &tgt), &mut rng, None, None);
    let outcome = train(&mut g, &model, &data, &data, &config, "hash").unwrap();

    // fresh graph + model, import, re-evaluate
    let mut g2 = Graph::new();
    let mut rng2 = ChaCha8Rng::seed_from_u64(99);
    let model2 = QgModel::init(&mut g2, tiny_model_config(&src, &tgt), &mut rng2, None, None);
    model2.registry.import(&mut g2, &outcome.best.tensors).unwrap();
    let ppl = perplexity(&mut g2, &model2, &data);
    assert_eq!(
        ppl.to_bits(),
        outcome.best.meta.dev_ppl.to_bits(),
        "stored {} vs recomputed {}",
        outcome.best.meta.dev_ppl,
        ppl
    );
}

#[test]
fn zeroed_copyless_model_has_uniform_perplexity() {
    // all-zero parameters, copy off: every step's distribution is uniform
    // over the target vocabulary, so perplexity is exactly |V|
    let (data, src, tgt) = mini_corpus();
    let mut config = tiny_model_config(&src, &tgt);
    config.use_copy = false;
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = QgModel::init(&mut g, config, &mut rng, None, None);
    let zeros: Vec<crate::tensor::NamedTensor> = model
        .registry
        .export(&g, crate::tensor::Dtype::F64)
        .into_iter()
        .map(|mut nt| {
            nt.tensor = Tensor::zeros(nt.tensor.shape.clone());
            nt
        })
        .collect();
    model.registry.import(&mut g, &zeros).unwrap();
    let ppl = perplexity(&mut g, &model, &data);
    let v = tgt.size() as f64;
    assert!((ppl - v).abs() < 1e-6 * v, "ppl {ppl} vs vocab {v}");
}

#[test]
fn nan_parameters_abort_with_batch_id_after_retry() {
    let (data, src, tgt) = mini_corpus();
    let config = TrainConfig { batch_size: 4, max_epochs: 2, ..TrainConfig::desk(17) };
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let model = QgModel::init(&mut g, tiny_model_config(&src, &tgt), &mut rng, None, None);
    // poison one weight
    let p = model.registry.get("decoder.w_out").unwrap();
    let mut vals = g.values(p).to_vec();
    vals[0] = f64::NAN;
    g.set_values(p, &vals);
    let err = match train(&mut g, &model, &data, &data, &config, "hash") {
        Ok(_) => panic!("training with NaN parameters must fail"),
        Err(e) => e,
    };
    match err {
        TrainError::NonFiniteLoss { epoch, batch } => {
            assert_eq!(epoch, 1);
            assert_eq!(batch, 0);
        }
        other => panic!("expected NonFiniteLoss, got {other}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = TrainConfig::desk(1);
    c.batch_size = 0;
    assert!(c.validate().is_err());
    let mut c = TrainConfig::desk(1);
    c.lr = -0.5;
    assert!(c.validate().is_err());
    let mut c = TrainConfig::desk(1);
    c.lr_decay = 0.0;
    assert!(c.validate().is_err());
    let mut c = TrainConfig::desk(1);
    c.clip_norm = 0.0;
    assert!(c.validate().is_err());
    assert!(TrainConfig::desk(1).validate().is_ok());
}

// ── cosine embedding loss ───────────────────────────────────────────────

#[test]
fn cosine_loss_reference_points() {
    let mut g = Graph::new();
    let v = vec![0.6, -0.8, 0.0];
    let s = g.constant(Tensor::row(v.clone()));
    let same = cosine_embedding_loss(&mut g, s, &v);
    assert!(g.scalar_value(same).abs() < 1e-9, "loss(v, v) = 0");
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    let opposite = cosine_embedding_loss(&mut g, s, &neg);
    assert!((g.scalar_value(opposite) - 2.0).abs() < 1e-9, "loss(v, -v) = 2");
    let e1 = g.constant(Tensor::row(vec![1.0, 0.0]));
    let ortho = cosine_embedding_loss(&mut g, e1, &[0.0, 1.0]);
    assert!((g.scalar_value(ortho) - 1.0).abs() < 1e-9, "loss(e1, e2) = 1");
}

#[test]
fn cosine_loss_defined_at_zero_norm() {
    let mut g = Graph::new();
    let s = g.constant(Tensor::row(vec![0.0, 0.0]));
    let l = cosine_embedding_loss(&mut g, s, &[1.0, 0.0]);
    assert!((g.scalar_value(l) - 1.0).abs() < 1e-9);
    let l2 = cosine_embedding_loss(&mut g, s, &[0.0, 0.0]);
    assert!(g.scalar_value(l2).is_finite());
}

#[test]
fn cosine_loss_gradients() {
    let err = crate::tensor::grad_check(
        |g, refs| cosine_embedding_loss(g, refs[0], &[0.3, -0.7, 0.2]),
        &[Tensor::row(vec![0.5, 0.4, -0.1])],
        1e-5,
    );
    assert!(err < 1e-7, "cosine loss grad error {err}");
}

// ── pre-training ────────────────────────────────────────────────────────

#[test]
fn pretraining_runs_and_bounds_batch_losses() {
    let (data, src, tgt) = mini_corpus();
    let mut model_config = tiny_model_config(&src, &tgt);
    model_config.use_sentence_encoder = true;
    let config = TrainConfig { batch_size: 4, max_epochs: 3, ..TrainConfig::desk(23) };
    let out = pretrain_sentence_encoder(&data, &data, &model_config, &config, "hash").unwrap();
    assert!(!out.step2_batch_losses.is_empty());
    for &l in &out.step2_batch_losses {
        assert!((0.0..=2.0).contains(&l), "step-2 batch loss {l} outside [0, 2]");
    }
    assert_eq!(out.checkpoint.meta.component, "sentence_encoder");
    assert!(out
        .checkpoint
        .tensors
        .iter()
        .all(|t| t.name.starts_with("encoder.sent_lstm")));
    assert!(!out.checkpoint.tensors.is_empty());
    // step-2 weights import cleanly into a fresh full model
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let model = QgModel::init(&mut g, model_config, &mut rng, None, None);
    let n = model
        .registry
        .import_prefixed(&mut g, &out.checkpoint.tensors, "encoder.sent_lstm")
        .unwrap();
    assert_eq!(n, out.checkpoint.tensors.len());
}
