//! Full model assembly: encoder, decoder, and the teacher-forced
//! per-example loss used by training, perplexity, and pre-training.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{IndexedExample, BOS_ID, UNK_ID};
use crate::decoder::{decode_step, nll_sum, DecodeContext, DecoderParams, StepOutput};
use crate::encoder::{
    encode_sentence, feature_embed, fuse, EncodedSource, EncoderConfig, EncoderParams,
    SourceFeatures, WordVectors,
};
use crate::params::ParamRegistry;
use crate::tensor::{Graph, TensorRef};

/// What the sentence encoder reads. `Question` is the first pre-training
/// step's "cheat" mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceInput {
    Sentence,
    Question,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub use_copy: bool,
    pub use_sentence_encoder: bool,
    pub sentence_input: SentenceInput,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
}

impl ModelConfig {
    pub fn desk(src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig::desk(),
            use_copy: true,
            use_sentence_encoder: true,
            sentence_input: SentenceInput::Sentence,
            src_vocab_size,
            tgt_vocab_size,
        }
    }

    /// Width of the decoder's attention keys.
    pub fn context_dim(&self) -> usize {
        let token_dim = 2 * self.encoder.hidden;
        if self.use_sentence_encoder {
            token_dim + 2 * self.encoder.hidden
        } else {
            token_dim
        }
    }
}

pub struct QgModel {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
    pub registry: ParamRegistry,
}

impl QgModel {
    pub fn init(
        g: &mut Graph,
        config: ModelConfig,
        rng: &mut ChaCha8Rng,
        vocab_tokens: Option<&[String]>,
        pretrained: Option<&WordVectors>,
    ) -> Self {
        let mut registry = ParamRegistry::new();
        let encoder = EncoderParams::init(
            g,
            &mut registry,
            rng,
            &config.encoder,
            config.src_vocab_size,
            vocab_tokens,
            pretrained,
            config.use_sentence_encoder,
        );
        let decoder = DecoderParams::init(
            g,
            &mut registry,
            rng,
            config.tgt_vocab_size,
            config.encoder.word_dim,
            config.encoder.hidden,
            config.encoder.layers,
            config.context_dim(),
            config.encoder.dropout,
        );
        QgModel { config, encoder, decoder, registry }
    }

    /// View of the example respecting the coref toggle.
    pub fn prepare<'a>(&self, ex: &'a IndexedExample) -> std::borrow::Cow<'a, IndexedExample> {
        if self.config.encoder.features.coref {
            std::borrow::Cow::Borrowed(ex)
        } else {
            std::borrow::Cow::Owned(ex.without_inserted(self.config.tgt_vocab_size))
        }
    }

    pub fn encode_example(
        &self,
        g: &mut Graph,
        ex: &IndexedExample,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> EncodedSource {
        let src = SourceFeatures::of_example(ex);
        let inputs = feature_embed(g, &self.encoder, &self.config.encoder, &src);
        let out = self.encoder.token_lstm.encode(g, inputs, training, rng);
        let token_states = g.concat(&out.states, 0);
        let sentence_embedding = self.encoder.sent_lstm.as_ref().map(|lstm| {
            let sent_inputs = match self.config.sentence_input {
                SentenceInput::Sentence => inputs,
                SentenceInput::Question => self.question_inputs(g, ex),
            };
            encode_sentence(g, lstm, sent_inputs, training, rng)
        });
        let fused_states = match sentence_embedding {
            Some(se) => fuse(g, token_states, se),
            None => token_states,
        };
        let finals = out.finals.iter().map(|(f, b)| ((f.h, f.c), (b.h, b.c))).collect();
        EncodedSource {
            token_states,
            sentence_embedding,
            fused_states,
            mask: vec![true; ex.src_len()],
            finals,
        }
    }

    /// Sentence-embedding path only (used by pre-training step 2 and for
    /// emitting question embeddings in step 1).
    pub fn sentence_embedding_only(
        &self,
        g: &mut Graph,
        ex: &IndexedExample,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> TensorRef {
        let lstm = self
            .encoder
            .sent_lstm
            .as_ref()
            .expect("model was built without a sentence encoder");
        let inputs = match self.config.sentence_input {
            SentenceInput::Sentence => {
                let src = SourceFeatures::of_example(ex);
                feature_embed(g, &self.encoder, &self.config.encoder, &src)
            }
            SentenceInput::Question => self.question_inputs(g, ex),
        };
        encode_sentence(g, lstm, inputs, training, rng)
    }

    /// Feature view of the gold question: word ids through the source
    /// embedding table, every feature column zero.
    fn question_inputs(&self, g: &mut Graph, ex: &IndexedExample) -> TensorRef {
        let n = ex.question_src_ids.len().max(1);
        let ids: Vec<usize> =
            if ex.question_src_ids.is_empty() { vec![UNK_ID] } else { ex.question_src_ids.clone() };
        let zeros_u8 = vec![0u8; n];
        let zeros_usize = vec![0usize; n];
        let src = SourceFeatures {
            ids: &ids,
            answer: &zeros_u8,
            case: &zeros_u8,
            ner: &zeros_usize,
            inserted: &zeros_u8,
        };
        feature_embed(g, &self.encoder, &self.config.encoder, &src)
    }

    /// Teacher-forced decode over the gold question. Returns one step
    /// output per target position.
    pub fn teacher_forced(
        &self,
        g: &mut Graph,
        ex: &IndexedExample,
        encoded: &EncodedSource,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Vec<StepOutput> {
        let ctx = DecodeContext {
            encoded,
            src_ext_ids: &ex.src_ext_ids,
            extended_size: ex.extended_size(self.config.tgt_vocab_size),
            use_copy: self.config.use_copy,
        };
        let mut state = self.decoder.initial_state(g, encoded);
        let inputs = &ex.tgt_ids[..ex.tgt_ids.len() - 1];
        inputs
            .iter()
            .map(|&prev| decode_step(g, &self.decoder, prev, &mut state, &ctx, training, rng))
            .collect()
    }

    /// Targets for the loss: extended ids with copy enabled, UNK-mapped
    /// plain ids otherwise. One per teacher-forced step.
    pub fn targets(&self, ex: &IndexedExample) -> Vec<usize> {
        if self.config.use_copy {
            ex.tgt_ext_ids[1..].to_vec()
        } else {
            ex.tgt_ids[1..].to_vec()
        }
    }

    /// Sum of per-token NLL and the token count for one example.
    pub fn example_nll(
        &self,
        g: &mut Graph,
        ex: &IndexedExample,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> (TensorRef, usize) {
        let ex = self.prepare(ex);
        let encoded = self.encode_example(g, &ex, training, rng);
        let steps = self.teacher_forced(g, &ex, &encoded, training, rng);
        let dists: Vec<TensorRef> = steps.iter().map(|s| s.final_dist).collect();
        let targets = self.targets(&ex);
        let mask = vec![true; targets.len()];
        nll_sum(g, &dists, &targets, &mask)
    }

    /// Eval-mode greedy token accuracy under teacher forcing, plus the NLL
    /// sum and token count.
    pub fn teacher_forced_stats(
        &self,
        g: &mut Graph,
        ex: &IndexedExample,
        rng: &mut ChaCha8Rng,
    ) -> (f64, usize, usize) {
        let prepared = self.prepare(ex);
        let encoded = self.encode_example(g, &prepared, false, rng);
        let steps = self.teacher_forced(g, &prepared, &encoded, false, rng);
        let targets = self.targets(&prepared);
        let mut correct = 0usize;
        for (step, &gold) in steps.iter().zip(&targets) {
            let v = g.values(step.final_dist);
            let argmax = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite distribution"))
                .map(|(i, _)| i)
                .expect("non-empty distribution");
            if argmax == gold {
                correct += 1;
            }
        }
        let dists: Vec<TensorRef> = steps.iter().map(|s| s.final_dist).collect();
        let mask = vec![true; targets.len()];
        let (nll, count) = nll_sum(g, &dists, &targets, &mask);
        (g.scalar_value(nll), count, correct)
    }

    /// BOS id for decoding entry points.
    pub fn bos(&self) -> usize {
        BOS_ID
    }
}
