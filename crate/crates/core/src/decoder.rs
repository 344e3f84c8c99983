//! Attentional LSTM decoder with input feeding and a pointer-generator
//! copy mechanism over the extended vocabulary.
//!
//! One step: the decoder LSTM consumes `concat(prev_token_emb,
//! input_feed)`; global attention scores the top hidden state against the
//! fused encoder states with a bilinear form; the attentional hidden state
//! `h~ = tanh(W_c . concat(context, top_hidden))` feeds both the generation
//! softmax and the next step's input feed; a gate `p_gen` mixes the
//! generation distribution with attention-derived copy probabilities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::EncodedSource;
use crate::lstm::{LstmStack, LstmState};
use crate::params::ParamRegistry;
use crate::tensor::{Graph, Tensor, TensorRef};

/// Probability floor inside the NLL log.
pub const NLL_EPSILON: f64 = 1e-12;
/// Additive score bias that removes masked positions from the attention
/// softmax (their weight underflows to exactly zero).
const MASK_BIAS: f64 = -1e30;

pub struct DecoderParams {
    pub tgt_emb: TensorRef,
    pub lstm: LstmStack,
    w_attn: TensorRef,        // h x ctx
    w_att_hidden: TensorRef,  // (ctx + h) x h
    w_out: TensorRef,         // h x V_tgt
    b_out: TensorRef,         // 1 x V_tgt
    w_pgen_ctx: TensorRef,    // ctx x 1
    w_pgen_hidden: TensorRef, // h x 1
    w_pgen_input: TensorRef,  // (word_dim + h) x 1
    b_pgen: TensorRef,        // 1 x 1
    bridge_h: Vec<TensorRef>, // per layer: 2h x h
    bridge_c: Vec<TensorRef>,
    hidden: usize,
    word_dim: usize,
}

impl DecoderParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        graph: &mut Graph,
        reg: &mut ParamRegistry,
        rng: &mut R,
        tgt_vocab_size: usize,
        word_dim: usize,
        hidden: usize,
        layers: usize,
        ctx_dim: usize,
        dropout: f64,
    ) -> Self {
        let tgt_emb = reg.glorot(graph, rng, "decoder.tgt_emb", &[tgt_vocab_size, word_dim]);
        let lstm = LstmStack::init(
            graph,
            reg,
            rng,
            "decoder.lstm",
            word_dim + hidden,
            hidden,
            layers,
            dropout,
        );
        let bridge_h = (0..layers)
            .map(|l| reg.glorot(graph, rng, format!("decoder.bridge_h.l{l}"), &[2 * hidden, hidden]))
            .collect();
        let bridge_c = (0..layers)
            .map(|l| reg.glorot(graph, rng, format!("decoder.bridge_c.l{l}"), &[2 * hidden, hidden]))
            .collect();
        DecoderParams {
            tgt_emb,
            lstm,
            w_attn: reg.glorot(graph, rng, "decoder.w_attn", &[hidden, ctx_dim]),
            w_att_hidden: reg.glorot(graph, rng, "decoder.w_att_hidden", &[ctx_dim + hidden, hidden]),
            w_out: reg.glorot(graph, rng, "decoder.w_out", &[hidden, tgt_vocab_size]),
            b_out: reg.zeros(graph, "decoder.b_out", &[1, tgt_vocab_size]),
            w_pgen_ctx: reg.glorot(graph, rng, "decoder.w_pgen_ctx", &[ctx_dim, 1]),
            w_pgen_hidden: reg.glorot(graph, rng, "decoder.w_pgen_hidden", &[hidden, 1]),
            w_pgen_input: reg.glorot(graph, rng, "decoder.w_pgen_input", &[word_dim + hidden, 1]),
            b_pgen: reg.zeros(graph, "decoder.b_pgen", &[1, 1]),
            bridge_h,
            bridge_c,
            hidden,
            word_dim,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    /// Initial decoder state: a learned linear map per layer from the
    /// encoder's concatenated final forward/backward states; the input feed
    /// starts at zeros.
    pub fn initial_state(&self, g: &mut Graph, encoded: &EncodedSource) -> DecoderState {
        assert_eq!(
            encoded.finals.len(),
            self.lstm.layers(),
            "encoder and decoder layer counts must match for the bridge"
        );
        let layers = encoded
            .finals
            .iter()
            .zip(self.bridge_h.iter().zip(&self.bridge_c))
            .map(|(((fw_h, fw_c), (bw_h, bw_c)), (wh, wc))| {
                let hcat = g.concat(&[*fw_h, *bw_h], 1);
                let ccat = g.concat(&[*fw_c, *bw_c], 1);
                (g.matmul(hcat, *wh), g.matmul(ccat, *wc))
            })
            .collect();
        let input_feed = g.constant(Tensor::zeros(vec![1, self.hidden]));
        DecoderState { lstm: LstmState { layers }, input_feed }
    }
}

#[derive(Clone)]
pub struct DecoderState {
    pub lstm: LstmState,
    pub input_feed: TensorRef,
}

/// One decoding step's distributions. `p_gen` is absent when the copy
/// mechanism is disabled (then `final_dist == gen_dist`).
pub struct StepOutput {
    pub attn_weights: TensorRef,
    pub p_gen: Option<TensorRef>,
    pub gen_dist: TensorRef,
    pub final_dist: TensorRef,
}

/// Global attention with a bilinear score: `score_t = q . W_a . fused[t]`,
/// masked softmax over valid positions, `context = sum_t a_t fused[t]`.
pub fn attention(
    g: &mut Graph,
    w_attn: TensorRef,
    query: TensorRef,
    fused_states: TensorRef,
    mask: &[bool],
) -> (TensorRef, TensorRef) {
    let (t_len, _) = g.shape(fused_states);
    assert_eq!(mask.len(), t_len, "mask length {} != {} states", mask.len(), t_len);
    assert!(mask.iter().any(|&m| m), "attention contract error: all positions masked");
    let qa = g.matmul(query, w_attn);
    let fused_t = g.transpose(fused_states);
    let mut scores = g.matmul(qa, fused_t);
    if mask.iter().any(|&m| !m) {
        let bias = g.constant(Tensor::new(
            vec![1, t_len],
            mask.iter().map(|&m| if m { 0.0 } else { MASK_BIAS }).collect(),
        ));
        scores = g.add(scores, bias);
    }
    let attn = g.softmax(scores, 1);
    let context = g.matmul(attn, fused_states);
    (context, attn)
}

/// Mixes generation and copy distributions over the extended vocabulary:
/// `final(w) = p_gen * gen(w) + (1 - p_gen) * sum_{i: ext_ids[i] = w} attn[i]`.
pub fn compose_final_dist(
    g: &mut Graph,
    p_gen: TensorRef,
    gen_dist: TensorRef,
    attn: TensorRef,
    src_ext_ids: &[usize],
    extended_size: usize,
) -> TensorRef {
    let (_, tgt_size) = g.shape(gen_dist);
    assert!(extended_size >= tgt_size);
    let padded = if extended_size > tgt_size {
        let zeros = g.constant(Tensor::zeros(vec![1, extended_size - tgt_size]));
        g.concat(&[gen_dist, zeros], 1)
    } else {
        gen_dist
    };
    let copy = g.scatter_add_cols(attn, src_ext_ids, extended_size);
    let one = g.scalar(1.0);
    let copy_gate = g.sub(one, p_gen);
    let gen_part = g.mul(p_gen, padded);
    let copy_part = g.mul(copy_gate, copy);
    g.add(gen_part, copy_part)
}

pub struct DecodeContext<'a> {
    pub encoded: &'a EncodedSource,
    pub src_ext_ids: &'a [usize],
    pub extended_size: usize,
    pub use_copy: bool,
}

/// Advances the decoder one step under teacher forcing or search.
/// `prev_id` indexes the target vocabulary (generated source-OOV tokens
/// feed back as UNK).
pub fn decode_step(
    g: &mut Graph,
    params: &DecoderParams,
    prev_id: usize,
    state: &mut DecoderState,
    ctx: &DecodeContext,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> StepOutput {
    let prev_emb = g.gather_rows(params.tgt_emb, &[prev_id]);
    let lstm_input = g.concat(&[prev_emb, state.input_feed], 1);
    let top_hidden = params.lstm.step(g, lstm_input, &mut state.lstm, training, rng);
    let (context, attn_weights) =
        attention(g, params.w_attn, top_hidden, ctx.encoded.fused_states, &ctx.encoded.mask);
    let ch = g.concat(&[context, top_hidden], 1);
    let pre = g.matmul(ch, params.w_att_hidden);
    let att_hidden = g.tanh(pre);
    let logits_raw = g.matmul(att_hidden, params.w_out);
    let logits = g.add(logits_raw, params.b_out);
    let gen_dist = g.softmax(logits, 1);
    state.input_feed = att_hidden;

    if !ctx.use_copy {
        return StepOutput { attn_weights, p_gen: None, gen_dist, final_dist: gen_dist };
    }
    let s1 = g.matmul(context, params.w_pgen_ctx);
    let s2 = g.matmul(top_hidden, params.w_pgen_hidden);
    let s3 = g.matmul(lstm_input, params.w_pgen_input);
    let s12 = g.add(s1, s2);
    let s123 = g.add(s12, s3);
    let z = g.add(s123, params.b_pgen);
    let p_gen = g.sigmoid(z);
    let final_dist =
        compose_final_dist(g, p_gen, gen_dist, attn_weights, ctx.src_ext_ids, ctx.extended_size);
    StepOutput { attn_weights, p_gen: Some(p_gen), gen_dist, final_dist }
}

/// Sum over unmasked steps of `-log(dist[target] + eps)` plus the step
/// count; callers divide for the mean.
pub fn nll_sum(
    g: &mut Graph,
    dists: &[TensorRef],
    targets: &[usize],
    mask: &[bool],
) -> (TensorRef, usize) {
    assert_eq!(dists.len(), targets.len(), "one distribution per target");
    assert_eq!(dists.len(), mask.len(), "one mask entry per target");
    let mut logs = Vec::new();
    for ((&d, &t), &m) in dists.iter().zip(targets).zip(mask) {
        if !m {
            continue;
        }
        let p = g.pick(d, 0, t);
        let eps = g.scalar(NLL_EPSILON);
        let pe = g.add(p, eps);
        logs.push(g.log(pe));
    }
    assert!(!logs.is_empty(), "nll over zero steps");
    let count = logs.len();
    let cat = g.concat(&logs, 1);
    let total = g.sum(cat);
    (g.neg(total), count)
}

/// Mean over non-pad steps of `-log(dist[target] + eps)`.
pub fn nll_loss(g: &mut Graph, dists: &[TensorRef], targets: &[usize], mask: &[bool]) -> TensorRef {
    let (total, count) = nll_sum(g, dists, targets, mask);
    let inv = g.scalar(1.0 / count as f64);
    g.mul(total, inv)
}
