//! Vocabularies and extended-vocabulary example indexing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusError, IndexedExample, QgExample};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

/// Bijective id/string map with the four specials at fixed ids. Built from
/// the training split only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, ids }
    }

    /// Restores the id map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.ids = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let specials = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN];
        for (i, s) in specials.iter().enumerate() {
            if self.tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(CorpusError::Malformed(format!(
                    "vocab special {s} missing at id {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }
}

/// Frequency-ranked vocabularies over lowercased training examples, ties
/// broken lexicographically, truncated at `src_max`/`tgt_max` (counts
/// include the four specials).
pub fn build_vocab(examples: &[QgExample], src_max: usize, tgt_max: usize) -> (Vocab, Vocab) {
    let mut src_freq: HashMap<&str, u64> = HashMap::new();
    let mut tgt_freq: HashMap<&str, u64> = HashMap::new();
    for ex in examples {
        for t in &ex.sentence.tokens {
            *src_freq.entry(t.lower.as_str()).or_default() += 1;
        }
        for q in &ex.question {
            *tgt_freq.entry(q.as_str()).or_default() += 1;
        }
    }
    (rank_and_truncate(src_freq, src_max), rank_and_truncate(tgt_freq, tgt_max))
}

fn rank_and_truncate(freq: HashMap<&str, u64>, max: usize) -> Vocab {
    let mut entries: Vec<(&str, u64)> = freq.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep = max.saturating_sub(4);
    let mut tokens: Vec<String> =
        vec![PAD_TOKEN.into(), UNK_TOKEN.into(), BOS_TOKEN.into(), EOS_TOKEN.into()];
    tokens.extend(entries.into_iter().take(keep).map(|(t, _)| t.to_string()));
    Vocab::from_tokens(tokens)
}

/// Joint content hash of a vocabulary pair, embedded in preprocessed files
/// and checkpoints to detect mismatches.
pub fn vocab_pair_hash(src: &Vocab, tgt: &Vocab) -> String {
    let mut hasher = Sha256::new();
    for t in &src.tokens {
        hasher.update(t.as_bytes());
        hasher.update([0u8]);
    }
    hasher.update([1u8]);
    for t in &tgt.tokens {
        hasher.update(t.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    hex_string(&digest[..16])
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// On-disk vocabulary pair.
#[derive(Debug, Serialize, Deserialize)]
pub struct VocabFile {
    pub version: u32,
    pub src: Vocab,
    pub tgt: Vocab,
}

pub const VOCAB_FORMAT_VERSION: u32 = 1;

impl VocabFile {
    pub fn new(src: Vocab, tgt: Vocab) -> Self {
        VocabFile { version: VOCAB_FORMAT_VERSION, src, tgt }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocab serializes")
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut file: VocabFile = serde_json::from_str(text)
            .map_err(|e| CorpusError::Malformed(format!("vocab file: {e}")))?;
        if file.version != VOCAB_FORMAT_VERSION {
            return Err(CorpusError::Version {
                found: file.version,
                expected: VOCAB_FORMAT_VERSION,
            });
        }
        file.src.rebuild_index();
        file.tgt.rebuild_index();
        file.src.validate()?;
        file.tgt.validate()?;
        Ok(file)
    }

    pub fn hash(&self) -> String {
        vocab_pair_hash(&self.src, &self.tgt)
    }
}

/// Indexes an annotated, filtered example against the vocabulary pair.
///
/// - `src_ids` map source OOVs to UNK;
/// - `src_ext_ids` assign temporary ids `tgt_size + k` to distinct source
///   tokens outside the target vocabulary, first occurrence first;
/// - `tgt_ext_ids` prefer the in-target-vocab id, then the matching source
///   temporary id when the gold token appears verbatim in the source, else
///   UNK.
pub fn encode_example(ex: &QgExample, src_vocab: &Vocab, tgt_vocab: &Vocab) -> IndexedExample {
    let tgt_size = tgt_vocab.size();
    let toks = &ex.sentence.tokens;
    let src_tokens: Vec<String> = toks.iter().map(|t| t.lower.clone()).collect();
    let src_ids: Vec<usize> = src_tokens.iter().map(|t| src_vocab.id(t)).collect();
    let mut oov_list: Vec<String> = Vec::new();
    let src_ext_ids: Vec<usize> = src_tokens
        .iter()
        .map(|t| {
            if tgt_vocab.contains(t) {
                tgt_vocab.id(t)
            } else {
                let k = oov_list.iter().position(|o| o == t).unwrap_or_else(|| {
                    oov_list.push(t.clone());
                    oov_list.len() - 1
                });
                tgt_size + k
            }
        })
        .collect();

    let mut tgt_ids = vec![BOS_ID];
    let mut tgt_ext_ids = vec![BOS_ID];
    for q in &ex.question {
        tgt_ids.push(tgt_vocab.id(q));
        if tgt_vocab.contains(q) {
            tgt_ext_ids.push(tgt_vocab.id(q));
        } else if let Some(k) = oov_list.iter().position(|o| o == q) {
            tgt_ext_ids.push(tgt_size + k);
        } else {
            tgt_ext_ids.push(UNK_ID);
        }
    }
    tgt_ids.push(EOS_ID);
    tgt_ext_ids.push(EOS_ID);

    IndexedExample {
        doc_id: ex.sentence.doc_id.clone(),
        sent_index: ex.sentence.sent_index,
        answer_span: ex.answer_span,
        answer: toks.iter().map(|t| t.answer_bit).collect(),
        case: toks.iter().map(|t| t.case_bit).collect(),
        ner: toks.iter().map(|t| t.ner.id()).collect(),
        inserted: toks.iter().map(|t| t.inserted_bit).collect(),
        src_tokens,
        src_ids,
        src_ext_ids,
        oov_list,
        tgt_tokens: ex.question.clone(),
        tgt_ids,
        tgt_ext_ids,
        question_src_ids: ex.question.iter().map(|q| src_vocab.id(q)).collect(),
    }
}
