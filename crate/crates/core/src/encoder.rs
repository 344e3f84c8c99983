//! Feature-rich token encoding, the bidirectional token encoder, and the
//! answer-focused sentence embedding.
//!
//! Per token the input is `concat(word_embedding, answer_bit, case_bit,
//! ner_embedding, inserted_bit)` with toggled-off features omitted. A
//! distinct bidirectional LSTM reads the same feature-rich input and its
//! final state (top-layer forward and backward hidden states concatenated)
//! becomes a sentence embedding that is concatenated onto every token
//! encoding.

use std::collections::HashMap;
use std::io::BufRead;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{IndexedExample, NER_LABEL_COUNT};
use crate::lstm::{BiLstm, BiLstmOutput};
use crate::params::ParamRegistry;
use crate::tensor::{Graph, Tensor, TensorRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureToggles {
    pub answer: bool,
    pub ner: bool,
    pub case: bool,
    pub coref: bool,
}

impl FeatureToggles {
    pub fn all() -> Self {
        FeatureToggles { answer: true, ner: true, case: true, coref: true }
    }

    pub fn none() -> Self {
        FeatureToggles { answer: false, ner: false, case: false, coref: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub word_dim: usize,
    /// Hidden units per direction.
    pub hidden: usize,
    pub layers: usize,
    pub ner_emb_dim: usize,
    pub dropout: f64,
    pub features: FeatureToggles,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 300,
            hidden: 640,
            layers: 2,
            ner_emb_dim: 16,
            dropout: 0.3,
            features: FeatureToggles::all(),
        }
    }
}

impl EncoderConfig {
    /// Small configuration that trains in seconds on a CPU.
    pub fn desk() -> Self {
        EncoderConfig { word_dim: 32, hidden: 64, ..Default::default() }
    }

    /// Input width of the token (and sentence) encoder.
    pub fn input_dim(&self) -> usize {
        let f = &self.features;
        self.word_dim
            + usize::from(f.answer)
            + usize::from(f.case)
            + if f.ner { self.ner_emb_dim } else { 0 }
            + usize::from(f.coref)
    }
}

/// Pretrained word vectors in whitespace-separated text form
/// (`token v1 ... vd` per line).
pub struct WordVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn parse<R: BufRead>(r: R) -> std::io::Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = 0usize;
        for line in r.lines() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<f64> = parts.filter_map(|p| p.parse().ok()).collect();
            if values.is_empty() {
                continue;
            }
            if dim == 0 {
                dim = values.len();
            }
            if values.len() == dim {
                vectors.insert(token.to_string(), values);
            }
        }
        Ok(WordVectors { dim, vectors })
    }
}

pub struct EncoderParams {
    pub word_emb: TensorRef,
    pub word_emb_frozen: bool,
    pub ner_emb: Option<TensorRef>,
    pub token_lstm: BiLstm,
    pub sent_lstm: Option<BiLstm>,
    /// Tokens missing from a pretrained vector file (fell back to glorot
    /// rows).
    pub pretrained_misses: usize,
}

impl EncoderParams {
    /// Initializes all encoder parameters on the graph. When `pretrained`
    /// is given, word embeddings are loaded from it and frozen; otherwise
    /// they are glorot-initialized and trainable. `vocab_tokens` maps row
    /// index to surface for pretrained lookup.
    pub fn init(
        graph: &mut Graph,
        reg: &mut ParamRegistry,
        rng: &mut ChaCha8Rng,
        config: &EncoderConfig,
        src_vocab_size: usize,
        vocab_tokens: Option<&[String]>,
        pretrained: Option<&WordVectors>,
        with_sentence_encoder: bool,
    ) -> Self {
        let mut misses = 0usize;
        let (word_table, frozen) = match pretrained {
            Some(wv) => {
                assert_eq!(
                    wv.dim, config.word_dim,
                    "pretrained vector dim {} does not match configured word_dim {}",
                    wv.dim, config.word_dim
                );
                let tokens = vocab_tokens.expect("pretrained vectors require the vocab token list");
                let mut values = Vec::with_capacity(src_vocab_size * config.word_dim);
                for i in 0..src_vocab_size {
                    match tokens.get(i).and_then(|t| wv.vectors.get(t)) {
                        Some(v) => values.extend_from_slice(v),
                        None => {
                            misses += 1;
                            let row = crate::tensor::glorot_init(&[1, config.word_dim], rng);
                            values.extend_from_slice(&row.values);
                        }
                    }
                }
                (Tensor::new(vec![src_vocab_size, config.word_dim], values), true)
            }
            None => (crate::tensor::glorot_init(&[src_vocab_size, config.word_dim], rng), false),
        };
        let word_emb = reg.add(graph, "encoder.word_emb", word_table, !frozen);
        let ner_emb = config.features.ner.then(|| {
            reg.glorot(graph, rng, "encoder.ner_emb", &[NER_LABEL_COUNT, config.ner_emb_dim])
        });
        let token_lstm = BiLstm::init(
            graph,
            reg,
            rng,
            "encoder.token_lstm",
            config.input_dim(),
            config.hidden,
            config.layers,
            config.dropout,
        );
        let sent_lstm = with_sentence_encoder.then(|| {
            BiLstm::init(
                graph,
                reg,
                rng,
                "encoder.sent_lstm",
                config.input_dim(),
                config.hidden,
                config.layers,
                config.dropout,
            )
        });
        EncoderParams { word_emb, word_emb_frozen: frozen, ner_emb, token_lstm, sent_lstm, pretrained_misses: misses }
    }
}

/// Everything the decoder needs about one encoded source sentence.
pub struct EncodedSource {
    /// `T x 2h` top-layer token states.
    pub token_states: TensorRef,
    /// `1 x 2h` answer-focused sentence embedding, when enabled.
    pub sentence_embedding: Option<TensorRef>,
    /// `T x (2h + sent_dim)`; equals `token_states` with the sentence
    /// encoder disabled.
    pub fused_states: TensorRef,
    pub mask: Vec<bool>,
    /// Per encoder layer: final (forward, backward) hidden and cell states,
    /// feeding the decoder's bridge.
    pub finals: Vec<((TensorRef, TensorRef), (TensorRef, TensorRef))>,
}

/// The token id/feature view the encoder consumes. `features_of` builds it
/// from an indexed example; the pre-training path builds a question view.
pub struct SourceFeatures<'a> {
    pub ids: &'a [usize],
    pub answer: &'a [u8],
    pub case: &'a [u8],
    pub ner: &'a [usize],
    pub inserted: &'a [u8],
}

impl<'a> SourceFeatures<'a> {
    pub fn of_example(ex: &'a IndexedExample) -> Self {
        SourceFeatures {
            ids: &ex.src_ids,
            answer: &ex.answer,
            case: &ex.case,
            ner: &ex.ner,
            inserted: &ex.inserted,
        }
    }
}

/// Builds the `T x d_in` feature-rich input matrix.
pub fn feature_embed(
    g: &mut Graph,
    params: &EncoderParams,
    config: &EncoderConfig,
    src: &SourceFeatures,
) -> TensorRef {
    let t_len = src.ids.len();
    assert!(t_len >= 1, "cannot encode an empty source");
    let mut parts = vec![g.gather_rows(params.word_emb, src.ids)];
    let col = |g: &mut Graph, bits: &[u8]| {
        g.constant(Tensor::new(vec![t_len, 1], bits.iter().map(|&b| f64::from(b)).collect()))
    };
    if config.features.answer {
        parts.push(col(g, src.answer));
    }
    if config.features.case {
        parts.push(col(g, src.case));
    }
    if config.features.ner {
        let table = params.ner_emb.expect("ner toggle on implies ner table");
        parts.push(g.gather_rows(table, src.ner));
    }
    if config.features.coref {
        parts.push(col(g, src.inserted));
    }
    if parts.len() == 1 {
        parts[0]
    } else {
        g.concat(&parts, 1)
    }
}

/// Runs the bidirectional token encoder over the feature-rich inputs.
pub fn bilstm_encode(
    g: &mut Graph,
    params: &EncoderParams,
    inputs: TensorRef,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> BiLstmOutput {
    params.token_lstm.encode(g, inputs, training, rng)
}

/// Sentence embedding: the distinct sentence biLSTM runs over the same
/// feature-rich inputs (answer bits included, which makes the embedding
/// answer-specific); its top-layer final forward and backward hidden
/// states concatenate into a `1 x 2h` vector.
pub fn encode_sentence(
    g: &mut Graph,
    sent_lstm: &BiLstm,
    inputs: TensorRef,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> TensorRef {
    let out = sent_lstm.encode(g, inputs, training, rng);
    let (fw, bw) = out.finals.last().expect("at least one layer");
    g.concat(&[fw.h, bw.h], 1)
}

/// Broadcast-concatenates the sentence embedding onto every token state.
pub fn fuse(g: &mut Graph, token_states: TensorRef, sentence_embedding: TensorRef) -> TensorRef {
    let (t_len, _) = g.shape(token_states);
    let broadcast = g.gather_rows(sentence_embedding, &vec![0; t_len]);
    g.concat(&[token_states, broadcast], 1)
}

/// Full encoder pass: feature embed, token biLSTM, optional sentence
/// embedding, fuse.
pub fn encode(
    g: &mut Graph,
    params: &EncoderParams,
    config: &EncoderConfig,
    src: &SourceFeatures,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> EncodedSource {
    let inputs = feature_embed(g, params, config, src);
    let out = bilstm_encode(g, params, inputs, training, rng);
    let token_states = g.concat(&out.states, 0);
    let sentence_embedding = params
        .sent_lstm
        .as_ref()
        .map(|lstm| encode_sentence(g, lstm, inputs, training, rng));
    let fused_states = match sentence_embedding {
        Some(se) => fuse(g, token_states, se),
        None => token_states,
    };
    let finals = out
        .finals
        .iter()
        .map(|(fw, bw)| ((fw.h, fw.c), (bw.h, bw.c)))
        .collect();
    EncodedSource {
        token_states,
        sentence_embedding,
        fused_states,
        mask: vec![true; src.ids.len()],
        finals,
    }
}
