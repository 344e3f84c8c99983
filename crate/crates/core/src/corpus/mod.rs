//! Corpus ingestion and preprocessing: dataset loading, tokenization,
//! answer-span alignment, feature annotation, coreference mention
//! insertion, vocabularies, and indexed example emission.

mod align;
mod annotate;
mod coref;
mod dataset;
mod pipeline;
mod tokenizer;
mod vocab;

pub use align::align_answer;
pub use annotate::{
    annotate, emit_annotations, AnnotationFile, CorefChainSpec, DocAnnotations, NerSpan,
    SentenceAnnotations, ANNOTATION_FORMAT_VERSION,
};
pub use coref::{insert_coreferents, CorefChain, CorefInsertion};
pub use dataset::{load_dataset, load_dataset_str, QaRecord};
pub use pipeline::{
    filter_lengths,
    build_examples, preprocess, read_examples, write_examples, PreprocessConfig, PreprocessOutput,
    PreprocessStats, EXAMPLE_FORMAT_VERSION,
};
pub use tokenizer::{split_sentences, tokenize};
pub use vocab::{
    build_vocab, encode_example, vocab_pair_hash, Vocab, VocabFile, BOS_ID, EOS_ID, PAD_ID,
    UNK_ID, VOCAB_FORMAT_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse { offset: usize, line: usize, column: usize, message: String },
    #[error("alignment error for question {question_id}: {message}")]
    Alignment { question_id: String, message: String },
    #[error("annotation error in doc {doc_id} sentence {sent_index}: {message}")]
    Annotation { doc_id: String, sent_index: usize, message: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("vocab hash mismatch: examples were indexed with {example_hash}, vocab file is {vocab_hash}")]
    VocabHashMismatch { example_hash: String, vocab_hash: String },
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The fixed NER label set. `Misc` absorbs any unknown external label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NerLabel {
    None,
    Person,
    Location,
    Organization,
    Date,
    Money,
    Number,
    Nationality,
    Title,
    Misc,
}

pub const NER_LABEL_COUNT: usize = 10;

impl NerLabel {
    pub fn id(self) -> usize {
        match self {
            NerLabel::None => 0,
            NerLabel::Person => 1,
            NerLabel::Location => 2,
            NerLabel::Organization => 3,
            NerLabel::Date => 4,
            NerLabel::Money => 5,
            NerLabel::Number => 6,
            NerLabel::Nationality => 7,
            NerLabel::Title => 8,
            NerLabel::Misc => 9,
        }
    }

    /// Parses an external label; anything outside the fixed set maps to
    /// `Misc` and the caller counts a warning.
    pub fn from_external(s: &str) -> (Self, bool) {
        match s.to_ascii_uppercase().as_str() {
            "NONE" | "O" => (NerLabel::None, true),
            "PERSON" => (NerLabel::Person, true),
            "LOCATION" => (NerLabel::Location, true),
            "ORGANIZATION" => (NerLabel::Organization, true),
            "DATE" => (NerLabel::Date, true),
            "MONEY" => (NerLabel::Money, true),
            "NUMBER" => (NerLabel::Number, true),
            "NATIONALITY" => (NerLabel::Nationality, true),
            "TITLE" => (NerLabel::Title, true),
            "MISC" => (NerLabel::Misc, true),
            _ => (NerLabel::Misc, false),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NerLabel::None => "NONE",
            NerLabel::Person => "PERSON",
            NerLabel::Location => "LOCATION",
            NerLabel::Organization => "ORGANIZATION",
            NerLabel::Date => "DATE",
            NerLabel::Money => "MONEY",
            NerLabel::Number => "NUMBER",
            NerLabel::Nationality => "NATIONALITY",
            NerLabel::Title => "TITLE",
            NerLabel::Misc => "MISC",
        }
    }
}

/// A surface token with its feature values. `char_span` holds byte offsets
/// into the source sentence; inserted tokens carry a zero-width span at the
/// insertion point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lower: String,
    pub char_span: (usize, usize),
    pub case_bit: u8,
    pub ner: NerLabel,
    pub answer_bit: u8,
    pub inserted_bit: u8,
}

impl Token {
    pub fn new(surface: &str, char_span: (usize, usize)) -> Self {
        Token {
            lower: surface.to_lowercase(),
            case_bit: u8::from(surface.chars().any(char::is_uppercase)),
            surface: surface.to_string(),
            char_span,
            ner: NerLabel::None,
            answer_bit: 0,
            inserted_bit: 0,
        }
    }

    /// Coreference-inserted token at byte position `at`.
    pub fn inserted(surface: &str, at: usize) -> Self {
        let mut t = Token::new(surface, (at, at));
        t.inserted_bit = 1;
        t
    }
}

/// An ordered token sequence with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub tokens: Vec<Token>,
    pub doc_id: String,
    pub sent_index: usize,
}

impl AnnotatedSentence {
    /// Number of tokens that were in the original text.
    pub fn original_len(&self) -> usize {
        self.tokens.iter().filter(|t| t.inserted_bit == 0).count()
    }

    /// Tab-separated feature table, one token per line:
    /// `surface lower case ner answer inserted`. Used for golden-file
    /// comparisons and debugging dumps.
    pub fn render_feature_table(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                t.surface,
                t.lower,
                t.case_bit,
                t.ner.name(),
                t.answer_bit,
                t.inserted_bit
            ));
        }
        out
    }
}

/// One training/generation unit: an annotated sentence, the active answer
/// span, and the gold question. The span indexes `sentence.tokens` and
/// covers only non-inserted tokens; `answer_bit` is 1 exactly inside it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QgExample {
    pub sentence: AnnotatedSentence,
    pub answer_span: (usize, usize),
    pub question: Vec<String>,
    pub answer_text: String,
}

impl QgExample {
    /// Stamps answer bits to match the span.
    pub fn apply_answer_bits(&mut self) {
        for (i, t) in self.sentence.tokens.iter_mut().enumerate() {
            t.answer_bit = u8::from(i >= self.answer_span.0 && i < self.answer_span.1);
        }
    }
}

/// Fully indexed example, the on-disk unit of the preprocessed corpus.
///
/// `src_ext_ids` live in the extended vocabulary: tokens in the target
/// vocab keep their target id, all other source tokens get consecutive
/// temporary ids `tgt_size, tgt_size+1, ...` in first-occurrence order
/// (recorded in `oov_list`). `tgt_ids`/`tgt_ext_ids` carry BOS/EOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedExample {
    pub doc_id: String,
    pub sent_index: usize,
    pub answer_span: (usize, usize),
    pub src_tokens: Vec<String>,
    pub src_ids: Vec<usize>,
    pub src_ext_ids: Vec<usize>,
    pub answer: Vec<u8>,
    pub case: Vec<u8>,
    pub ner: Vec<usize>,
    pub inserted: Vec<u8>,
    pub oov_list: Vec<String>,
    pub tgt_tokens: Vec<String>,
    pub tgt_ids: Vec<usize>,
    pub tgt_ext_ids: Vec<usize>,
    /// Question tokens mapped through the *source* vocabulary, consumed by
    /// the sentence encoder during its first pre-training step.
    pub question_src_ids: Vec<usize>,
}

impl IndexedExample {
    pub fn src_len(&self) -> usize {
        self.src_ids.len()
    }

    /// Width of the extended vocabulary for this example.
    pub fn extended_size(&self, tgt_vocab_size: usize) -> usize {
        tgt_vocab_size + self.oov_list.len()
    }

    /// View of this example with coreference-inserted tokens removed, for
    /// ablations that disable the coref feature. Temporary OOV ids are
    /// re-assigned over the surviving tokens so the copy distribution never
    /// targets an unreachable slot.
    pub fn without_inserted(&self, tgt_vocab_size: usize) -> IndexedExample {
        if self.inserted.iter().all(|&b| b == 0) {
            return self.clone();
        }
        let keep: Vec<usize> =
            (0..self.src_len()).filter(|&i| self.inserted[i] == 0).collect();
        let mut oov_list: Vec<String> = Vec::new();
        let mut src_ext_ids = Vec::with_capacity(keep.len());
        for &i in &keep {
            let ext = self.src_ext_ids[i];
            if ext < tgt_vocab_size {
                src_ext_ids.push(ext);
            } else {
                let tok = &self.src_tokens[i];
                let k = oov_list.iter().position(|o| o == tok).unwrap_or_else(|| {
                    oov_list.push(tok.clone());
                    oov_list.len() - 1
                });
                src_ext_ids.push(tgt_vocab_size + k);
            }
        }
        let tgt_ext_ids = self
            .tgt_ext_ids
            .iter()
            .enumerate()
            .map(|(pos, &id)| {
                if id < tgt_vocab_size {
                    id
                } else {
                    // positions 1..=len map to tgt_tokens (0 is BOS)
                    let tok = &self.tgt_tokens[pos - 1];
                    oov_list
                        .iter()
                        .position(|o| o == tok)
                        .map_or(UNK_ID, |k| tgt_vocab_size + k)
                }
            })
            .collect();
        // answer span indices shift by the number of dropped positions
        // before them; inserted tokens never carry answer bits
        let shift_before = |idx: usize| keep.iter().take_while(|&&k| k < idx).count();
        let answer_span = (shift_before(self.answer_span.0), shift_before(self.answer_span.1));
        IndexedExample {
            doc_id: self.doc_id.clone(),
            sent_index: self.sent_index,
            answer_span,
            src_tokens: keep.iter().map(|&i| self.src_tokens[i].clone()).collect(),
            src_ids: keep.iter().map(|&i| self.src_ids[i]).collect(),
            src_ext_ids,
            answer: keep.iter().map(|&i| self.answer[i]).collect(),
            case: keep.iter().map(|&i| self.case[i]).collect(),
            ner: keep.iter().map(|&i| self.ner[i]).collect(),
            inserted: vec![0; keep.len()],
            oov_list,
            tgt_tokens: self.tgt_tokens.clone(),
            tgt_ids: self.tgt_ids.clone(),
            tgt_ext_ids,
            question_src_ids: self.question_src_ids.clone(),
        }
    }
}
