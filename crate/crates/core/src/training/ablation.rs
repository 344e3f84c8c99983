//! Cumulative feature-ablation harness.
//!
//! Trains and evaluates the ladder baseline, +Answer, +NER, +Case, +CoRef,
//! +Copy, FocusCR-npt, FocusCR, Focus; the Focus variant is FocusCR
//! without the coreference feature and FocusCR-npt skips sentence-encoder
//! pre-training. Every row shares the same data hash and seed. Evaluation
//! uses the single-reference protocol.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{IndexedExample, Vocab};
use crate::encoder::{EncoderConfig, FeatureToggles};
use crate::eval::{score, RefSetup, ReferenceSet};
use crate::inference::generate_corpus;
use crate::model::{ModelConfig, QgModel, SentenceInput};
use crate::tensor::Graph;

use super::pretrain::{pretrain_sentence_encoder, SENTENCE_PREFIX};
use super::{perplexity, train, SentenceEncoderMode, TrainConfig, TrainError};

#[derive(Debug, Clone)]
pub struct LadderRung {
    pub name: &'static str,
    pub features: FeatureToggles,
    pub use_copy: bool,
    pub sent_mode: SentenceEncoderMode,
}

/// The full ablation ladder in table order.
pub fn ladder() -> Vec<LadderRung> {
    let f = |answer, ner, case, coref| FeatureToggles { answer, ner, case, coref };
    vec![
        LadderRung {
            name: "baseline",
            features: f(false, false, false, false),
            use_copy: false,
            sent_mode: SentenceEncoderMode::Off,
        },
        LadderRung {
            name: "+Answer",
            features: f(true, false, false, false),
            use_copy: false,
            sent_mode: SentenceEncoderMode::Off,
        },
        LadderRung {
            name: "+NER",
            features: f(true, true, false, false),
            use_copy: false,
            sent_mode: SentenceEncoderMode::Off,
        },
        LadderRung {
            name: "+Case",
            features: f(true, true, true, false),
            use_copy: false,
            sent_mode: SentenceEncoderMode::Off,
        },
        LadderRung {
            name: "+CoRef",
            features: f(true, true, true, true),
            use_copy: false,
            sent_mode: SentenceEncoderMode::Off,
        },
        LadderRung {
            name: "+Copy",
            features: f(true, true, true, true),
            use_copy: true,
            sent_mode: SentenceEncoderMode::Off,
        },
        LadderRung {
            name: "FocusCR-npt",
            features: f(true, true, true, true),
            use_copy: true,
            sent_mode: SentenceEncoderMode::Scratch,
        },
        LadderRung {
            name: "FocusCR",
            features: f(true, true, true, true),
            use_copy: true,
            sent_mode: SentenceEncoderMode::Pretrained,
        },
        LadderRung {
            name: "Focus",
            features: f(true, true, true, false),
            use_copy: true,
            sent_mode: SentenceEncoderMode::Pretrained,
        },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub model_name: String,
    pub bleu4: f64,
    pub meteor: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub config_hash: String,
    pub data_hash: String,
    pub seed: u64,
    pub dev_ppl: f64,
}

pub struct AblationSetup<'a> {
    pub train_data: &'a [IndexedExample],
    pub dev_data: &'a [IndexedExample],
    pub test_data: &'a [IndexedExample],
    pub base_encoder: EncoderConfig,
    pub train_config: TrainConfig,
    pub src_vocab: &'a Vocab,
    pub tgt_vocab: &'a Vocab,
    pub vocab_hash: String,
    pub data_hash: String,
    pub beam: usize,
    pub max_len: usize,
    pub rungs: Vec<LadderRung>,
}

pub fn config_hash(model_config: &ModelConfig, train_config: &TrainConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(model_config).expect("config serializes"));
    hasher.update(serde_json::to_vec(train_config).expect("config serializes"));
    let d = hasher.finalize();
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Trains and evaluates one ladder rung.
pub fn run_rung(setup: &AblationSetup, rung: &LadderRung) -> Result<AblationRow, TrainError> {
    let model_config = ModelConfig {
        encoder: EncoderConfig { features: rung.features, ..setup.base_encoder.clone() },
        use_copy: rung.use_copy,
        use_sentence_encoder: rung.sent_mode != SentenceEncoderMode::Off,
        sentence_input: SentenceInput::Sentence,
        src_vocab_size: setup.src_vocab.size(),
        tgt_vocab_size: setup.tgt_vocab.size(),
    };
    let pretrained = if rung.sent_mode == SentenceEncoderMode::Pretrained {
        Some(pretrain_sentence_encoder(
            setup.train_data,
            setup.dev_data,
            &model_config,
            &setup.train_config,
            &setup.vocab_hash,
        )?)
    } else {
        None
    };

    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(setup.train_config.seed);
    let model = QgModel::init(&mut g, model_config.clone(), &mut rng, None, None);
    if let Some(pre) = &pretrained {
        model
            .registry
            .import_prefixed(&mut g, &pre.checkpoint.tensors, SENTENCE_PREFIX)?;
    }
    let outcome = train(
        &mut g,
        &model,
        setup.train_data,
        setup.dev_data,
        &setup.train_config,
        &setup.vocab_hash,
    )?;
    model.registry.import(&mut g, &outcome.best.tensors)?;
    let dev_ppl = perplexity(&mut g, &model, setup.dev_data);

    let tgt = setup.tgt_vocab;
    let generations = generate_corpus(
        &mut g,
        &model,
        setup.test_data,
        |id| tgt.token(id).to_string(),
        setup.beam,
        setup.max_len,
        setup.train_config.seed,
    );
    let refset = ReferenceSet::build(&generations, setup.test_data, RefSetup::SingleRef)?;
    let report = score(&refset)?;
    Ok(AblationRow {
        model_name: rung.name.to_string(),
        bleu4: report.bleu4,
        meteor: report.meteor_simplified,
        rouge_l: report.rouge_l,
        config_hash: config_hash(&model_config, &setup.train_config),
        data_hash: setup.data_hash.clone(),
        seed: setup.train_config.seed,
        dev_ppl,
    })
}

/// Runs every rung of the ladder and returns the machine-readable report
/// rows.
pub fn run_ablation(setup: &AblationSetup) -> Result<Vec<AblationRow>, TrainError> {
    setup.rungs.iter().map(|rung| run_rung(setup, rung)).collect()
}
