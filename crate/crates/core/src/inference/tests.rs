use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Deterministic toy scorer: per (step, previous token) log-distributions
/// over a small vocabulary. EOS is the usual id 3.
struct ToyModel {
    vocab: usize,
    max_len: usize,
    /// log_probs[step][prev][next]
    log_probs: Vec<Vec<Vec<f64>>>,
}

impl ToyModel {
    fn random(vocab: usize, max_len: usize, rng: &mut ChaCha8Rng) -> Self {
        let log_probs = (0..max_len)
            .map(|_| {
                (0..vocab)
                    .map(|_| {
                        let logits: Vec<f64> = (0..vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
                        log_softmax(&logits)
                    })
                    .collect()
            })
            .collect();
        ToyModel { vocab, max_len, log_probs }
    }

    /// Puts all mass on one forced id per step.
    fn forced(sequence: &[usize], vocab: usize) -> Self {
        let max_len = sequence.len();
        let log_probs = (0..max_len)
            .map(|step| {
                (0..vocab)
                    .map(|_| {
                        (0..vocab)
                            .map(|id| if id == sequence[step] { 0.0 } else { f64::NEG_INFINITY })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ToyModel { vocab, max_len, log_probs }
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_z).collect()
}

impl StepScorer for ToyModel {
    type State = usize; // step index

    fn initial_state(&mut self) -> usize {
        0
    }

    fn step(&mut self, state: &usize, prev_id: usize) -> (Vec<f64>, Vec<f64>, usize) {
        let step = (*state).min(self.max_len - 1);
        let prev = prev_id.min(self.vocab - 1);
        (self.log_probs[step][prev].clone(), vec![1.0], state + 1)
    }
}

/// Independent exhaustive oracle: enumerates every sequence (ending at EOS
/// or max_len) and returns the best normalized score with the same
/// tie-breaking as the search.
fn exhaustive_best(model: &mut ToyModel, max_len: usize) -> (f64, Vec<usize>) {
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stack: Vec<(Vec<usize>, f64, usize)> = vec![(Vec::new(), 0.0, 0)];
    while let Some((tokens, lp, state)) = stack.pop() {
        let prev = *tokens.last().unwrap_or(&BOS_ID);
        let (log_probs, _, next_state) = model.step(&state, prev);
        for (id, &l) in log_probs.iter().enumerate() {
            if l == f64::NEG_INFINITY {
                continue;
            }
            let mut t = tokens.clone();
            t.push(id);
            let total = lp + l;
            if id == EOS_ID || t.len() >= max_len {
                let score = total / t.len() as f64;
                let better = match &best {
                    None => true,
                    Some((bs, bt)) => {
                        score > *bs
                            || (score == *bs
                                && first_divergence(&t, bt) == std::cmp::Ordering::Less)
                    }
                };
                if better {
                    best = Some((score, t));
                }
            } else {
                stack.push((t, total, next_state));
            }
        }
    }
    best.expect("at least one sequence")
}

/// Independent greedy decoder.
fn greedy(model: &mut ToyModel, max_len: usize) -> (f64, Vec<usize>) {
    let mut state = model.initial_state();
    let mut tokens = Vec::new();
    let mut lp = 0.0;
    loop {
        let prev = *tokens.last().unwrap_or(&BOS_ID);
        let (log_probs, _, next) = model.step(&state, prev);
        let mut arg = 0usize;
        for (i, &l) in log_probs.iter().enumerate() {
            if l > log_probs[arg] {
                arg = i;
            }
        }
        tokens.push(arg);
        lp += log_probs[arg];
        state = next;
        if arg == EOS_ID || tokens.len() >= max_len {
            break;
        }
    }
    (lp / tokens.len() as f64, tokens)
}

#[test]
fn beam_one_equals_greedy() {
    for seed in 0..25u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = rng.gen_range(4..=8);
        let max_len = rng.gen_range(2..=5);
        let mut model = ToyModel::random(vocab, max_len, &mut rng);
        let hyp = beam_search(&mut model, 1, max_len);
        let (gscore, gtokens) = greedy(&mut model, max_len);
        assert_eq!(hyp.tokens, gtokens, "seed {seed}");
        assert!((hyp.score() - gscore).abs() < 1e-12);
    }
}

#[test]
fn forced_model_yields_forced_sequence() {
    let forced = vec![5usize, 2, 7, EOS_ID];
    let mut model = ToyModel::forced(&forced, 8);
    let hyp = beam_search(&mut model, 3, 10);
    assert_eq!(hyp.tokens, forced);
    assert!(hyp.finished);
    assert!((hyp.log_prob - 0.0).abs() < 1e-12);
}

#[test]
fn full_width_beam_matches_exhaustive_enumeration() {
    for seed in 100..130u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = rng.gen_range(4..=6);
        let max_len = rng.gen_range(2..=4);
        let mut model = ToyModel::random(vocab, max_len, &mut rng);
        let width = vocab.pow(max_len as u32);
        let hyp = beam_search(&mut model, width, max_len);
        let (best_score, best_tokens) = exhaustive_best(&mut model, max_len);
        assert_eq!(hyp.tokens, best_tokens, "seed {seed}");
        assert!((hyp.score() - best_score).abs() < 1e-12, "seed {seed}");
    }
}

#[test]
fn wider_beam_never_scores_below_greedy() {
    for seed in 200..240u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = rng.gen_range(4..=8);
        let max_len = rng.gen_range(2..=5);
        let beam = rng.gen_range(2..=8);
        let mut model = ToyModel::random(vocab, max_len, &mut rng);
        let wide = beam_search(&mut model, beam, max_len);
        let narrow = beam_search(&mut model, 1, max_len);
        assert!(
            wide.score() >= narrow.score() - 1e-12,
            "seed {seed}: beam {} scored {} below greedy {}",
            beam,
            wide.score(),
            narrow.score()
        );
    }
}

#[test]
#[should_panic(expected = "beam width must be >= 1")]
fn zero_beam_is_config_error() {
    let mut model = ToyModel::forced(&[EOS_ID], 4);
    beam_search(&mut model, 0, 4);
}

fn hyp_with(tokens: Vec<usize>, attention: Vec<Vec<f64>>) -> Hypothesis {
    Hypothesis { tokens, log_prob: -1.0, attention, finished: true }
}

#[test]
fn replace_unk_leaves_clean_output_alone() {
    let hyp = hyp_with(vec![5, 6, EOS_ID], vec![vec![1.0]; 3]);
    let out = replace_unk(&hyp, |id| format!("w{id}"), 10, &[], &["src".into()]);
    assert_eq!(out, vec!["w5", "w6"]);
}

#[test]
fn replace_unk_uses_attention_peak() {
    let src: Vec<String> = ["sampled", "by", "komoto"].iter().map(|s| s.to_string()).collect();
    let hyp = hyp_with(
        vec![5, UNK_ID, EOS_ID],
        vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.2, 0.7], vec![1.0, 0.0, 0.0]],
    );
    let out = replace_unk(&hyp, |id| format!("w{id}"), 10, &[], &src);
    assert_eq!(out, vec!["w5", "komoto"]);
}

#[test]
fn replace_unk_tie_breaks_leftmost() {
    let src: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
    let hyp = hyp_with(vec![UNK_ID], vec![vec![0.1, 0.2, 0.3, 0.1, 0.3]]);
    let out = replace_unk(&hyp, |id| format!("w{id}"), 10, &[], &src);
    assert_eq!(out, vec!["c"], "positions 2 and 4 tie; leftmost wins");
}

#[test]
fn extended_ids_map_to_oov_strings() {
    let oov = vec!["komoto".to_string()];
    let hyp = hyp_with(vec![10, EOS_ID], vec![vec![1.0]; 2]);
    let out = replace_unk(&hyp, |id| format!("w{id}"), 10, &oov, &["komoto".into()]);
    assert_eq!(out, vec!["komoto"]);
}
