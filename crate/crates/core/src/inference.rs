//! Beam-search decoding, UNK replacement by attention, and multi-question
//! generation over answer spans.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{IndexedExample, BOS_ID, EOS_ID, UNK_ID};
use crate::decoder::{decode_step, DecodeContext};
use crate::model::QgModel;
use crate::tensor::Graph;

/// A partial decoded question.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Extended-vocabulary token ids (without BOS).
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// One attention vector per emitted token.
    pub attention: Vec<Vec<f64>>,
    pub finished: bool,
}

impl Hypothesis {
    /// Length-normalized score: log-probability over length.
    pub fn score(&self) -> f64 {
        if self.tokens.is_empty() {
            f64::NEG_INFINITY
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }
}

/// Anything beam search can drive: the real model, or a deterministic toy
/// model in oracle tests. `State` is the decoder state between steps.
pub trait StepScorer {
    type State: Clone;

    fn initial_state(&mut self) -> Self::State;

    /// Advances one step from `prev_id` (an extended-vocab id; the real
    /// model feeds OOV ids back as UNK embeddings). Returns per-id log
    /// probabilities over the extended vocabulary, the attention vector,
    /// and the new state.
    fn step(&mut self, state: &Self::State, prev_id: usize) -> (Vec<f64>, Vec<f64>, Self::State);
}

/// Standard beam search over the scorer's distributions. Finished
/// hypotheses (EOS, or `max_len` reached) leave the active beam; the search
/// stops when the active beam cannot beat the best finished
/// length-normalized score. Ties break toward the hypothesis whose first
/// diverging token has the lower id.
pub fn beam_search<S: StepScorer>(scorer: &mut S, beam: usize, max_len: usize) -> Hypothesis {
    assert!(beam >= 1, "config error: beam width must be >= 1, got {beam}");
    assert!(max_len >= 1, "config error: max_len must be >= 1");
    let root = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        attention: Vec::new(),
        finished: false,
    };
    let mut active: Vec<(Hypothesis, S::State)> = vec![(root, scorer.initial_state())];
    let mut finished: Vec<Hypothesis> = Vec::new();

    while !active.is_empty() {
        let best_finished = finished.iter().map(Hypothesis::score).fold(f64::NEG_INFINITY, f64::max);
        // admissible bound on any extension's normalized score: future log
        // probabilities are (essentially) non-positive, so the cumulative
        // log-prob cannot rise, and dividing a negative total by the
        // largest possible length maximizes the score
        active.retain(|(h, _)| {
            let optimistic = if h.log_prob <= 0.0 {
                h.log_prob / max_len as f64
            } else {
                h.log_prob / (h.tokens.len() + 1) as f64
            };
            optimistic >= best_finished
        });
        if active.is_empty() {
            break;
        }
        let mut candidates: Vec<(Hypothesis, S::State)> = Vec::new();
        for (hyp, state) in &active {
            let prev = *hyp.tokens.last().unwrap_or(&BOS_ID);
            let (log_probs, attn, next_state) = scorer.step(state, prev);
            for (id, &lp) in log_probs.iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(id);
                let mut attention = hyp.attention.clone();
                attention.push(attn.clone());
                let is_eos = id == EOS_ID;
                let cand = Hypothesis {
                    tokens,
                    log_prob: hyp.log_prob + lp,
                    attention,
                    finished: is_eos,
                };
                candidates.push((cand, next_state.clone()));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.log_prob
                .partial_cmp(&a.0.log_prob)
                .expect("finite log-probs")
                .then_with(|| first_divergence(&a.0.tokens, &b.0.tokens))
        });
        candidates.truncate(beam);
        let mut next_active = Vec::new();
        for (cand, state) in candidates {
            if cand.finished || cand.tokens.len() >= max_len {
                finished.push(Hypothesis { finished: true, ..cand });
            } else {
                next_active.push((cand, state));
            }
        }
        active = next_active;
    }
    if finished.is_empty() {
        panic!("beam search produced no finished hypothesis");
    }
    finished
        .into_iter()
        .min_by(|a, b| {
            b.score()
                .partial_cmp(&a.score())
                .expect("finite scores")
                .then_with(|| first_divergence(&a.tokens, &b.tokens))
        })
        .expect("non-empty finished pool")
}

/// Ordering by the first diverging token id (lower wins), then by length.
fn first_divergence(a: &[usize], b: &[usize]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Drives the trained model as a [`StepScorer`] for one encoded source.
pub struct ModelScorer<'a> {
    graph: &'a mut Graph,
    model: &'a QgModel,
    example: &'a IndexedExample,
    encoded: crate::encoder::EncodedSource,
    rng: ChaCha8Rng,
    extended_size: usize,
}

impl<'a> ModelScorer<'a> {
    /// Encodes the example (eval mode) and prepares stepping. The example
    /// must already respect the model's coref toggle (see
    /// [`QgModel::prepare`]).
    pub fn new(
        graph: &'a mut Graph,
        model: &'a QgModel,
        example: &'a IndexedExample,
        rng: ChaCha8Rng,
    ) -> Self {
        let mut rng = rng;
        let encoded = model.encode_example(graph, example, false, &mut rng);
        let extended_size = example.extended_size(model.config.tgt_vocab_size);
        ModelScorer { graph, model, example, encoded, rng, extended_size }
    }
}

impl StepScorer for ModelScorer<'_> {
    type State = crate::decoder::DecoderState;

    fn initial_state(&mut self) -> Self::State {
        self.model.decoder.initial_state(self.graph, &self.encoded)
    }

    fn step(&mut self, state: &Self::State, prev_id: usize) -> (Vec<f64>, Vec<f64>, Self::State) {
        // generated source-OOV tokens feed back as UNK embeddings
        let prev = if prev_id >= self.model.config.tgt_vocab_size { UNK_ID } else { prev_id };
        let ctx = DecodeContext {
            encoded: &self.encoded,
            src_ext_ids: &self.example.src_ext_ids,
            extended_size: self.extended_size,
            use_copy: self.model.config.use_copy,
        };
        let mut next = state.clone();
        let out = decode_step(self.graph, &self.model.decoder, prev, &mut next, &ctx, false, &mut self.rng);
        let dist = self.graph.values(out.final_dist);
        let log_probs: Vec<f64> =
            dist.iter().map(|&p| (p + crate::decoder::NLL_EPSILON).ln()).collect();
        let attn = self.graph.values(out.attn_weights).to_vec();
        (log_probs, attn, next)
    }
}

/// Renders a hypothesis as token strings: extended-vocab OOV ids map
/// directly to their source strings, UNK tokens are replaced by the source
/// token with the highest attention weight at that step (leftmost on
/// ties), and EOS is dropped.
pub fn replace_unk(
    hypothesis: &Hypothesis,
    tgt_token: impl Fn(usize) -> String,
    tgt_vocab_size: usize,
    oov_list: &[String],
    src_tokens: &[String],
) -> Vec<String> {
    assert_eq!(
        hypothesis.attention.len(),
        hypothesis.tokens.len(),
        "attention history must cover every output token"
    );
    let mut out = Vec::new();
    for (pos, &id) in hypothesis.tokens.iter().enumerate() {
        if id == EOS_ID {
            break;
        }
        if id >= tgt_vocab_size {
            out.push(oov_list[id - tgt_vocab_size].clone());
        } else if id == UNK_ID {
            let attn = &hypothesis.attention[pos];
            let mut best = 0usize;
            for (i, &w) in attn.iter().enumerate() {
                if w > attn[best] {
                    best = i;
                }
            }
            out.push(src_tokens[best].clone());
        } else {
            out.push(tgt_token(id));
        }
    }
    out
}

/// One generated question bound to its answer span.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Generation {
    pub doc_id: String,
    pub sent_index: usize,
    pub answer_span: (usize, usize),
    pub question: String,
}

/// Decodes one question per example using each example's own answer span.
pub fn generate_corpus(
    graph: &mut Graph,
    model: &QgModel,
    data: &[IndexedExample],
    tgt_token: impl Fn(usize) -> String + Copy,
    beam: usize,
    max_len: usize,
    seed: u64,
) -> Vec<Generation> {
    use rand::SeedableRng;
    let mut out = Vec::with_capacity(data.len());
    for ex in data {
        let prepared = model.prepare(ex).into_owned();
        graph.reset();
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scorer = ModelScorer::new(graph, model, &prepared, rng);
        let hyp = beam_search(&mut scorer, beam, max_len);
        let words = replace_unk(
            &hyp,
            tgt_token,
            model.config.tgt_vocab_size,
            &prepared.oov_list,
            &prepared.src_tokens,
        );
        // the original (pre coref-filtering) span keys the gold references
        out.push(Generation {
            doc_id: ex.doc_id.clone(),
            sent_index: ex.sent_index,
            answer_span: ex.answer_span,
            question: words.join(" "),
        });
    }
    graph.reset();
    out
}

/// Generates one question per answer span over a fixed sentence: the
/// example is re-encoded per span with only that span's answer bits set.
/// Output order matches input span order.
pub fn generate_all(
    graph: &mut Graph,
    model: &QgModel,
    example: &IndexedExample,
    spans: &[(usize, usize)],
    tgt_token: impl Fn(usize) -> String + Copy,
    beam: usize,
    max_len: usize,
    seed: u64,
) -> Vec<Generation> {
    use rand::SeedableRng;
    let mut out = Vec::new();
    for &span in spans {
        let mut ex = example.clone();
        ex.answer_span = span;
        for (i, bit) in ex.answer.iter_mut().enumerate() {
            *bit = u8::from(i >= span.0 && i < span.1);
        }
        let prepared = model.prepare(&ex).into_owned();
        graph.reset();
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scorer = ModelScorer::new(graph, model, &prepared, rng);
        let hyp = beam_search(&mut scorer, beam, max_len);
        let words = replace_unk(
            &hyp,
            tgt_token,
            model.config.tgt_vocab_size,
            &prepared.oov_list,
            &prepared.src_tokens,
        );
        out.push(Generation {
            doc_id: example.doc_id.clone(),
            sent_index: example.sent_index,
            answer_span: span,
            question: words.join(" "),
        });
    }
    graph.reset();
    out
}

#[cfg(test)]
mod tests;
