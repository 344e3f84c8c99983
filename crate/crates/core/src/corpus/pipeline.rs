//! End-to-end preprocessing: records -> annotated examples -> indexed
//! corpus, plus the line-delimited JSON interchange format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{
    align_answer, annotate, build_vocab, encode_example, insert_coreferents, split_sentences,
    tokenize, vocab_pair_hash, AnnotatedSentence, AnnotationFile, CorefChain, CorpusError,
    IndexedExample, NerLabel, QaRecord, QgExample, Vocab,
};

pub const EXAMPLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub src_vocab_max: usize,
    pub tgt_vocab_max: usize,
    pub max_source_len: usize,
    pub max_question_len: usize,
    /// When false, coreference chains in the sidecar are ignored (no
    /// mention insertion happens at all).
    pub with_coref: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            src_vocab_max: 45_000,
            tgt_vocab_max: 28_000,
            max_source_len: 100,
            max_question_len: 50,
            with_coref: true,
        }
    }
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub records: usize,
    pub examples: usize,
    pub dropped_cross_sentence: usize,
    pub dropped_alignment: usize,
    pub dropped_long_source: usize,
    pub dropped_long_question: usize,
    pub annotation_warnings: usize,
    pub coref_overlap_warnings: usize,
    pub coref_in_span_skips: usize,
}

pub struct PreprocessOutput {
    pub examples: Vec<IndexedExample>,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub vocab_hash: String,
    pub stats: PreprocessStats,
}

/// Builds annotated examples from QA records. Answer spans crossing a
/// sentence boundary are dropped (counted), as are unalignable answers.
pub fn build_examples(
    records: &[QaRecord],
    annotations: Option<&AnnotationFile>,
    config: &PreprocessConfig,
) -> Result<(Vec<QgExample>, PreprocessStats), CorpusError> {
    let mut stats = PreprocessStats { records: records.len(), ..Default::default() };
    let mut examples = Vec::new();
    for rec in records {
        // provenance key: sentences are identified per paragraph, so two
        // paragraphs of one article never collide in reference grouping
        let doc_key = format!("{}#p{}", rec.doc_id, rec.paragraph_index);
        let ranges = split_sentences(&rec.context);
        let Some(sent_index) = ranges
            .iter()
            .position(|&(s, e)| rec.answer_start >= s && rec.answer_start < e)
        else {
            stats.dropped_alignment += 1;
            continue;
        };
        let (sent_start, sent_end) = ranges[sent_index];
        if rec.answer_start + rec.answer_text.len() > sent_end {
            stats.dropped_cross_sentence += 1;
            continue;
        }
        let sentence_text = &rec.context[sent_start..sent_end];
        let local_offset = rec.answer_start - sent_start;
        let tokens = tokenize(sentence_text);
        let span = match align_answer(&tokens, &rec.answer_text, local_offset, &rec.question_id) {
            Ok(span) => span,
            Err(_) => {
                stats.dropped_alignment += 1;
                continue;
            }
        };
        let sentence = AnnotatedSentence {
            tokens,
            doc_id: doc_key.clone(),
            sent_index,
        };
        let external = annotations.and_then(|a| a.for_sentence(&doc_key, sent_index));
        let (sentence, warnings) = annotate(sentence, external)?;
        stats.annotation_warnings += warnings;

        let (sentence, span) = if config.with_coref {
            let chains: Vec<CorefChain> = external
                .map(|ann| {
                    ann.coref
                        .iter()
                        .map(|c| CorefChain {
                            mention: (c.mention_start, c.mention_end),
                            representative: c.representative.clone(),
                            representative_ner: c
                                .representative_ner
                                .iter()
                                .map(|l| NerLabel::from_external(l).0)
                                .collect(),
                        })
                        .collect()
                })
                .unwrap_or_default();
            let ins = insert_coreferents(&sentence, &chains, Some(span));
            stats.coref_overlap_warnings += ins.overlap_warnings;
            stats.coref_in_span_skips += ins.skipped_in_span;
            let new_span = (ins.index_map[span.0], ins.index_map[span.1 - 1] + 1);
            (ins.sentence, new_span)
        } else {
            (sentence, span)
        };

        let question: Vec<String> = tokenize(&rec.question).iter().map(|t| t.lower.clone()).collect();
        let mut ex = QgExample {
            sentence,
            answer_span: span,
            question,
            answer_text: rec.answer_text.clone(),
        };
        ex.apply_answer_bits();
        examples.push(ex);
    }
    Ok((examples, stats))
}

/// Drops examples whose source (counted before coref insertion) or
/// question exceed the configured lengths.
pub fn filter_lengths(
    examples: Vec<QgExample>,
    config: &PreprocessConfig,
    stats: &mut PreprocessStats,
) -> Vec<QgExample> {
    examples
        .into_iter()
        .filter(|ex| {
            if ex.sentence.original_len() > config.max_source_len {
                stats.dropped_long_source += 1;
                return false;
            }
            if ex.question.len() > config.max_question_len {
                stats.dropped_long_question += 1;
                return false;
            }
            true
        })
        .collect()
}

/// Full pipeline over one input split. When `vocabs` is given (dev/test
/// indexing), it is used as-is; otherwise vocabularies are built from these
/// examples (the training split).
pub fn preprocess(
    records: &[QaRecord],
    annotations: Option<&AnnotationFile>,
    config: &PreprocessConfig,
    vocabs: Option<(Vocab, Vocab)>,
) -> Result<PreprocessOutput, CorpusError> {
    let (examples, mut stats) = build_examples(records, annotations, config)?;
    let examples = filter_lengths(examples, config, &mut stats);
    let (src_vocab, tgt_vocab) = match vocabs {
        Some((s, t)) => (s, t),
        None => build_vocab(&examples, config.src_vocab_max, config.tgt_vocab_max),
    };
    let indexed: Vec<IndexedExample> =
        examples.iter().map(|ex| encode_example(ex, &src_vocab, &tgt_vocab)).collect();
    stats.examples = indexed.len();
    let vocab_hash = vocab_pair_hash(&src_vocab, &tgt_vocab);
    Ok(PreprocessOutput { examples: indexed, src_vocab, tgt_vocab, vocab_hash, stats })
}

#[derive(Debug, Serialize, Deserialize)]
struct ExampleFileHeader {
    format: String,
    version: u32,
    vocab_hash: String,
}

/// Writes the indexed corpus as line-delimited JSON: a header line with the
/// vocab hash, then one example per line.
pub fn write_examples<W: Write>(
    w: &mut W,
    examples: &[IndexedExample],
    vocab_hash: &str,
) -> Result<(), CorpusError> {
    let header = ExampleFileHeader {
        format: "qgen-examples".into(),
        version: EXAMPLE_FORMAT_VERSION,
        vocab_hash: vocab_hash.to_string(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for ex in examples {
        writeln!(w, "{}", serde_json::to_string(ex).expect("example serializes"))?;
    }
    Ok(())
}

/// Reads a preprocessed corpus, returning the examples and the embedded
/// vocab hash. When `expect_hash` is given a mismatch is an integrity
/// error.
pub fn read_examples<R: BufRead>(
    r: R,
    expect_hash: Option<&str>,
) -> Result<(Vec<IndexedExample>, String), CorpusError> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| CorpusError::Malformed("empty example file".into()))??;
    let header: ExampleFileHeader = serde_json::from_str(&header_line)
        .map_err(|e| CorpusError::Malformed(format!("bad example file header: {e}")))?;
    if header.version != EXAMPLE_FORMAT_VERSION {
        return Err(CorpusError::Version {
            found: header.version,
            expected: EXAMPLE_FORMAT_VERSION,
        });
    }
    if let Some(expect) = expect_hash {
        if header.vocab_hash != expect {
            return Err(CorpusError::VocabHashMismatch {
                example_hash: header.vocab_hash,
                vocab_hash: expect.to_string(),
            });
        }
    }
    let mut examples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: IndexedExample = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Malformed(format!("bad example line: {e}")))?;
        examples.push(ex);
    }
    Ok((examples, header.vocab_hash))
}
