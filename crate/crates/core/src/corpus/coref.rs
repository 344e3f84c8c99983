//! Coreference mention insertion.
//!
//! The representative mention of each chain is inserted immediately after
//! its coreferent, flagged with `inserted_bit = 1` so the model can learn
//! to include or ignore the augmenting text. A possessive pronoun mention
//! ("her", "his", "their") gets a possessive-marker token appended to the
//! inserted mention, reproducing markup like `her beyoncé 's`.

use super::{AnnotatedSentence, NerLabel, Token};

#[derive(Debug, Clone)]
pub struct CorefChain {
    /// Mention token range `[start, end)` in pre-insertion indices.
    pub mention: (usize, usize),
    pub representative: Vec<String>,
    pub representative_ner: Vec<NerLabel>,
}

/// Result of mention insertion. `index_map[i]` is the post-insertion index
/// of pre-insertion token `i`.
pub struct CorefInsertion {
    pub sentence: AnnotatedSentence,
    pub index_map: Vec<usize>,
    /// Chains dropped because an earlier chain already claimed an
    /// overlapping mention.
    pub overlap_warnings: usize,
    /// Chains dropped because their insertion point fell strictly inside
    /// the protected answer span.
    pub skipped_in_span: usize,
}

const POSSESSIVE_PRONOUNS: &[&str] = &["her", "his", "their"];
const POSSESSIVE_MARKER: &str = "'s";

pub fn insert_coreferents(
    sentence: &AnnotatedSentence,
    chains: &[CorefChain],
    protected_span: Option<(usize, usize)>,
) -> CorefInsertion {
    let n = sentence.tokens.len();
    let mut overlap_warnings = 0usize;
    let mut skipped_in_span = 0usize;
    let mut claimed = vec![false; n];
    // insertions[k] = tokens to add right after pre-insertion token k
    let mut insertions: Vec<Vec<Token>> = vec![Vec::new(); n];

    let mut ordered: Vec<&CorefChain> = chains.iter().collect();
    ordered.sort_by_key(|c| c.mention.0);

    for chain in ordered {
        let (ms, me) = chain.mention;
        if ms >= me || me > n || chain.representative.is_empty() {
            continue;
        }
        if claimed[ms..me].iter().any(|&c| c) {
            overlap_warnings += 1;
            continue;
        }
        let after = me - 1;
        if let Some((a, b)) = protected_span {
            // an insertion between tokens `after` and `after + 1` would
            // split the answer span
            if after + 1 > a && after + 1 < b {
                skipped_in_span += 1;
                continue;
            }
        }
        claimed[ms..me].iter_mut().for_each(|c| *c = true);
        let at = sentence.tokens[after].char_span.1;
        let mut added = Vec::new();
        for (i, rep) in chain.representative.iter().enumerate() {
            let mut t = Token::inserted(rep, at);
            t.ner = chain.representative_ner.get(i).copied().unwrap_or(NerLabel::None);
            added.push(t);
        }
        let mention_is_possessive =
            me - ms == 1 && POSSESSIVE_PRONOUNS.contains(&sentence.tokens[ms].lower.as_str());
        if mention_is_possessive {
            added.push(Token::inserted(POSSESSIVE_MARKER, at));
        }
        insertions[after].extend(added);
    }

    let mut tokens = Vec::with_capacity(n);
    let mut index_map = Vec::with_capacity(n);
    for (i, tok) in sentence.tokens.iter().enumerate() {
        index_map.push(tokens.len());
        tokens.push(tok.clone());
        tokens.extend(insertions[i].drain(..));
    }
    CorefInsertion {
        sentence: AnnotatedSentence {
            tokens,
            doc_id: sentence.doc_id.clone(),
            sent_index: sentence.sent_index,
        },
        index_map,
        overlap_warnings,
        skipped_in_span,
    }
}
