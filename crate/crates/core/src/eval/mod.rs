//! Automatic evaluation: corpus BLEU under both reference-set protocols,
//! ROUGE-L, a simplified exact+stem METEOR, unique-question counting, and
//! Pearson inter-rater agreement.

mod stem;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::IndexedExample;
use crate::inference::Generation;
pub use stem::stem;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric error: empty hypothesis set")]
    Empty,
    #[error("metric error: hypothesis {0} has no references")]
    NoReferences(usize),
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("no gold question for doc {doc_id} sentence {sent_index} span {span:?}")]
    MissingGold { doc_id: String, sent_index: usize, span: (usize, usize) },
}

/// Which reference-grouping protocol to evaluate under: `MultiRef` scores a
/// hypothesis against all gold questions of its source sentence; SingleRef
/// against the one gold question sharing its sentence and answer span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefSetup {
    MultiRef,
    SingleRef,
}

/// Hypotheses paired with their reference groups.
pub struct ReferenceSet {
    pub mode: RefSetup,
    pub hypotheses: Vec<Vec<String>>,
    pub references: Vec<Vec<Vec<String>>>,
    pub labels: Vec<(String, usize, (usize, usize))>,
}

impl ReferenceSet {
    /// Builds the reference groups from generation output and the
    /// preprocessed gold corpus.
    pub fn build(
        generations: &[Generation],
        gold: &[IndexedExample],
        mode: RefSetup,
    ) -> Result<Self, EvalError> {
        let mut by_sentence: HashMap<(&str, usize), Vec<&IndexedExample>> = HashMap::new();
        for ex in gold {
            by_sentence.entry((ex.doc_id.as_str(), ex.sent_index)).or_default().push(ex);
        }
        let mut hypotheses = Vec::new();
        let mut references = Vec::new();
        let mut labels = Vec::new();
        for gen in generations {
            let key = (gen.doc_id.as_str(), gen.sent_index);
            let candidates = by_sentence.get(&key).ok_or_else(|| EvalError::MissingGold {
                doc_id: gen.doc_id.clone(),
                sent_index: gen.sent_index,
                span: gen.answer_span,
            })?;
            let refs: Vec<Vec<String>> = match mode {
                RefSetup::MultiRef => candidates.iter().map(|ex| ex.tgt_tokens.clone()).collect(),
                RefSetup::SingleRef => {
                    let matching = candidates
                        .iter()
                        .find(|ex| ex.answer_span == gen.answer_span)
                        .ok_or_else(|| EvalError::MissingGold {
                            doc_id: gen.doc_id.clone(),
                            sent_index: gen.sent_index,
                            span: gen.answer_span,
                        })?;
                    vec![matching.tgt_tokens.clone()]
                }
            };
            hypotheses.push(gen.question.split_whitespace().map(str::to_string).collect());
            references.push(refs);
            labels.push((gen.doc_id.clone(), gen.sent_index, gen.answer_span));
        }
        Ok(ReferenceSet { mode, hypotheses, references, labels })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypDiagnostic {
    pub doc_id: String,
    pub sent_index: usize,
    pub answer_span: (usize, usize),
    pub n_refs: usize,
    pub rouge_l: f64,
    pub meteor_simplified: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub setup: RefSetup,
    pub bleu4: f64,
    pub meteor_simplified: f64,
    pub rouge_l: f64,
    pub unique_count: usize,
    pub per_hypothesis: Vec<HypDiagnostic>,
}

/// Scores a reference set under every metric and collects per-hypothesis
/// diagnostics.
pub fn score(refset: &ReferenceSet) -> Result<MetricReport, EvalError> {
    let hyps = &refset.hypotheses;
    let refs = &refset.references;
    let bleu4 = bleu(hyps, refs, 4)?;
    let rouge = rouge_l(hyps, refs)?;
    let meteor = meteor_simplified(hyps, refs)?;
    let questions: Vec<String> = hyps.iter().map(|h| h.join(" ")).collect();
    let per_hypothesis = refset
        .labels
        .iter()
        .zip(hyps.iter().zip(refs))
        .map(|((doc_id, sent_index, span), (h, rs))| HypDiagnostic {
            doc_id: doc_id.clone(),
            sent_index: *sent_index,
            answer_span: *span,
            n_refs: rs.len(),
            rouge_l: 100.0 * best_rouge_pair(h, rs),
            meteor_simplified: 100.0 * best_meteor_pair(h, rs),
        })
        .collect();
    Ok(MetricReport {
        setup: refset.mode,
        bleu4,
        meteor_simplified: meteor,
        rouge_l: rouge,
        unique_count: count_unique(&questions),
        per_hypothesis,
    })
}

// ── BLEU ────────────────────────────────────────────────────────────────

/// Corpus-level BLEU: clipped n-gram precision per order, geometric mean,
/// brevity penalty `exp(1 - r/c)` when `c < r` with the per-segment
/// closest-length reference (ties toward the shorter reference). Orders
/// with zero possible n-grams are excluded from the mean; a zero clipped
/// count on orders >= 2 gets +1 smoothing on numerator and denominator; a
/// zero unigram count short-circuits to 0.
pub fn bleu(
    hypotheses: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    max_n: usize,
) -> Result<f64, EvalError> {
    if hypotheses.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut clipped = vec![0u64; max_n];
    let mut total = vec![0u64; max_n];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (i, (hyp, refs)) in hypotheses.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(EvalError::NoReferences(i));
        }
        hyp_len += hyp.len();
        ref_len += refs
            .iter()
            .map(|r| (r.len().abs_diff(hyp.len()), r.len()))
            .min()
            .map(|(_, l)| l)
            .unwrap_or(0);
        for n in 1..=max_n {
            if hyp.len() < n {
                continue;
            }
            total[n - 1] += (hyp.len() - n + 1) as u64;
            let hyp_grams = ngram_counts(hyp, n);
            let mut max_ref: HashMap<&[String], u64> = HashMap::new();
            for r in refs {
                for (gram, count) in ngram_counts(r, n) {
                    let e = max_ref.entry(gram).or_default();
                    *e = (*e).max(count);
                }
            }
            for (gram, count) in hyp_grams {
                clipped[n - 1] += count.min(max_ref.get(gram).copied().unwrap_or(0));
            }
        }
    }
    if hyp_len == 0 || total[0] == 0 || clipped[0] == 0 {
        return Ok(0.0);
    }
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let mut log_sum = 0.0;
    let mut levels = 0usize;
    for n in 1..=max_n {
        if total[n - 1] == 0 {
            continue;
        }
        let p = if clipped[n - 1] == 0 && n >= 2 {
            (clipped[n - 1] + 1) as f64 / (total[n - 1] + 1) as f64
        } else {
            clipped[n - 1] as f64 / total[n - 1] as f64
        };
        log_sum += p.ln();
        levels += 1;
    }
    Ok(100.0 * bp * (log_sum / levels as f64).exp())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_default() += 1;
    }
    counts
}

// ── ROUGE-L ─────────────────────────────────────────────────────────────

const ROUGE_BETA: f64 = 1.2;

/// LCS-based F-measure per pair (recall-weighted, beta = 1.2), max over
/// references, corpus mean, as a percentage.
pub fn rouge_l(
    hypotheses: &[Vec<String>],
    references: &[Vec<Vec<String>>],
) -> Result<f64, EvalError> {
    if hypotheses.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for (i, (hyp, refs)) in hypotheses.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(EvalError::NoReferences(i));
        }
        sum += best_rouge_pair(hyp, refs);
    }
    Ok(100.0 * sum / hypotheses.len() as f64)
}

fn best_rouge_pair(hyp: &[String], refs: &[Vec<String>]) -> f64 {
    refs.iter().map(|r| rouge_pair(hyp, r)).fold(0.0, f64::max)
}

fn rouge_pair(hyp: &[String], reference: &[String]) -> f64 {
    let l = lcs_length(hyp, reference);
    if l == 0 || hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let p = l as f64 / hyp.len() as f64;
    let r = l as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * r * p / (r + b2 * p)
}

fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

// ── METEOR (simplified) ─────────────────────────────────────────────────

const METEOR_ALPHA: f64 = 0.9;
const METEOR_BETA: f64 = 3.0;
const METEOR_GAMMA: f64 = 0.5;

/// Simplified METEOR: unigram alignment by exact match then suffix-stem
/// match; `F = PR / (alpha P + (1-alpha) R)`; fragmentation penalty
/// `gamma (chunks/matches)^beta`; max over references; corpus mean. The
/// full synonym/paraphrase modules are deliberately absent, hence the
/// `_simplified` name in reports.
pub fn meteor_simplified(
    hypotheses: &[Vec<String>],
    references: &[Vec<Vec<String>>],
) -> Result<f64, EvalError> {
    if hypotheses.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for (i, (hyp, refs)) in hypotheses.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(EvalError::NoReferences(i));
        }
        sum += best_meteor_pair(hyp, refs);
    }
    Ok(100.0 * sum / hypotheses.len() as f64)
}

fn best_meteor_pair(hyp: &[String], refs: &[Vec<String>]) -> f64 {
    refs.iter().map(|r| meteor_pair(hyp, r)).fold(0.0, f64::max)
}

/// Alignment stages: scan hypothesis positions left to right; a position
/// matches the unmatched reference position with the same key, preferring
/// the one that continues the previous match (prev_ref + 1), else the
/// leftmost. Stage 1 keys on the exact token, stage 2 on stems over the
/// leftovers.
fn meteor_pair(hyp: &[String], reference: &[String]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut ref_taken = vec![false; reference.len()];
    let mut hyp_taken = vec![false; hyp.len()];

    let run_stage = |keyed: &dyn Fn(&str) -> String,
                         pairs: &mut Vec<(usize, usize)>,
                         ref_taken: &mut Vec<bool>,
                         hyp_taken: &mut Vec<bool>| {
        let ref_keys: Vec<String> = reference.iter().map(|w| keyed(w)).collect();
        let mut prev_ref: Option<usize> = None;
        for (i, hw) in hyp.iter().enumerate() {
            if hyp_taken[i] {
                continue;
            }
            let key = keyed(hw);
            let continuation = prev_ref
                .map(|p| p + 1)
                .filter(|&j| j < reference.len() && !ref_taken[j] && ref_keys[j] == key);
            let choice = continuation.or_else(|| {
                (0..reference.len()).find(|&j| !ref_taken[j] && ref_keys[j] == key)
            });
            if let Some(j) = choice {
                pairs.push((i, j));
                ref_taken[j] = true;
                hyp_taken[i] = true;
                prev_ref = Some(j);
            }
        }
    };
    run_stage(&|w: &str| w.to_string(), &mut pairs, &mut ref_taken, &mut hyp_taken);
    run_stage(&|w: &str| stem(w), &mut pairs, &mut ref_taken, &mut hyp_taken);

    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    pairs.sort_unstable();
    let mut chunks = 1usize;
    for w in pairs.windows(2) {
        let ((h0, r0), (h1, r1)) = (w[0], w[1]);
        if !(h1 == h0 + 1 && r1 == r0 + 1) {
            chunks += 1;
        }
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (chunks as f64 / m as f64).powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

// ── diversity / agreement ───────────────────────────────────────────────

/// Number of distinct question strings under strict character match.
pub fn count_unique(questions: &[String]) -> usize {
    let mut set: std::collections::HashSet<&str> = std::collections::HashSet::new();
    for q in questions {
        set.insert(q.as_str());
    }
    set.len()
}

/// Pearson correlation with a two-tailed p-value from the t-statistic
/// `t = r sqrt((n-2)/(1-r^2))` against the Student-t CDF with n-2 degrees
/// of freedom.
pub fn pearson_agreement(a: &[f64], b: &[f64]) -> Result<(f64, f64), EvalError> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(EvalError::UndefinedCorrelation(format!(
            "need equal-length series of at least 3 points, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(EvalError::UndefinedCorrelation("constant series".into()));
    }
    let r = cov / (va * vb).sqrt();
    let p = if (1.0 - r * r) < 1e-15 {
        0.0
    } else {
        let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, n - 2.0).expect("valid dof");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((r, p))
}

#[cfg(test)]
mod tests;
