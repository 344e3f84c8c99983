//! Run configuration: a TOML file holds every model/training knob; paths,
//! seeds, and output directories come from flags. Unknown keys are hard
//! errors so typos never pass silently.

use serde::{Deserialize, Serialize};

use qgen_core::encoder::{EncoderConfig, FeatureToggles};
use qgen_core::model::{ModelConfig, SentenceInput};
use qgen_core::training::{Precision, SentenceEncoderMode, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub inference: InferenceSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub word_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub ner_emb_dim: usize,
    pub dropout: f64,
    pub answer_feature: bool,
    pub ner_feature: bool,
    pub case_feature: bool,
    pub coref_feature: bool,
    pub copy: bool,
    pub sentence_encoder: SentenceEncoderMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            word_dim: 300,
            hidden: 640,
            layers: 2,
            ner_emb_dim: 16,
            dropout: 0.3,
            answer_feature: true,
            ner_feature: true,
            case_feature: true,
            coref_feature: true,
            copy: true,
            sentence_encoder: SentenceEncoderMode::Pretrained,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub patience: usize,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub early_stop_evals: Option<usize>,
    pub precision: Precision,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            batch_size: 64,
            lr: 1.0,
            lr_decay: 0.5,
            patience: 1,
            clip_norm: 5.0,
            max_epochs: 20,
            early_stop_evals: None,
            precision: Precision::F64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    pub src_vocab_max: usize,
    pub tgt_vocab_max: usize,
    pub max_source_len: usize,
    pub max_question_len: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            src_vocab_max: 45_000,
            tgt_vocab_max: 28_000,
            max_source_len: 100,
            max_question_len: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    pub beam: usize,
    pub max_len: usize,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection { beam: 5, max_len: 50 }
    }
}

impl FileConfig {
    pub fn features(&self) -> FeatureToggles {
        FeatureToggles {
            answer: self.model.answer_feature,
            ner: self.model.ner_feature,
            case: self.model.case_feature,
            coref: self.model.coref_feature,
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            word_dim: self.model.word_dim,
            hidden: self.model.hidden,
            layers: self.model.layers,
            ner_emb_dim: self.model.ner_emb_dim,
            dropout: self.model.dropout,
            features: self.features(),
        }
    }

    pub fn model_config(&self, src_vocab_size: usize, tgt_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder_config(),
            use_copy: self.model.copy,
            use_sentence_encoder: self.model.sentence_encoder != SentenceEncoderMode::Off,
            sentence_input: SentenceInput::Sentence,
            src_vocab_size,
            tgt_vocab_size,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.training.batch_size,
            lr: self.training.lr,
            lr_decay: self.training.lr_decay,
            patience: self.training.patience,
            clip_norm: self.training.clip_norm,
            max_epochs: self.training.max_epochs,
            seed,
            early_stop_evals: self.training.early_stop_evals,
            precision: self.training.precision,
        }
    }

    pub fn preprocess_config(&self) -> qgen_core::corpus::PreprocessConfig {
        qgen_core::corpus::PreprocessConfig {
            src_vocab_max: self.preprocess.src_vocab_max,
            tgt_vocab_max: self.preprocess.tgt_vocab_max,
            max_source_len: self.preprocess.max_source_len,
            max_question_len: self.preprocess.max_question_len,
            with_coref: self.model.coref_feature,
        }
    }
}
