//! Feature annotation: external sidecar ingestion plus the rule-based
//! fallback annotator.
//!
//! The sidecar is a versioned JSON file keyed by document and sentence,
//! carrying token-indexed NER spans and coreference chains (token indices
//! refer to the tokenized sentence before any mention insertion). When no
//! sidecar entry covers a sentence, the fallback annotator assigns NER
//! labels from capitalization and closed-class gazetteers.

use serde::{Deserialize, Serialize};

use super::{AnnotatedSentence, CorpusError, NerLabel, Token};

pub const ANNOTATION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub version: u32,
    pub documents: Vec<DocAnnotations>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocAnnotations {
    pub doc_id: String,
    pub sentences: Vec<SentenceAnnotations>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceAnnotations {
    pub sent_index: usize,
    #[serde(default)]
    pub ner: Vec<NerSpan>,
    #[serde(default)]
    pub coref: Vec<CorefChainSpec>,
}

/// Token range `[start, end)` labeled with an external NER tag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NerSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// One coreference chain entry: the mention range in this sentence and the
/// representative mention to insert after it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorefChainSpec {
    pub mention_start: usize,
    pub mention_end: usize,
    pub representative: Vec<String>,
    #[serde(default)]
    pub representative_ner: Vec<String>,
}

impl AnnotationFile {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let file: AnnotationFile = serde_json::from_str(text)
            .map_err(|e| CorpusError::Malformed(format!("annotation sidecar: {e}")))?;
        if file.version != ANNOTATION_FORMAT_VERSION {
            return Err(CorpusError::Version {
                found: file.version,
                expected: ANNOTATION_FORMAT_VERSION,
            });
        }
        Ok(file)
    }

    pub fn for_sentence(&self, doc_id: &str, sent_index: usize) -> Option<&SentenceAnnotations> {
        self.documents
            .iter()
            .find(|d| d.doc_id == doc_id)
            .and_then(|d| d.sentences.iter().find(|s| s.sent_index == sent_index))
    }
}

/// Serializes a sentence's NER labels back into sidecar form, so that
/// `annotate(ingest(emit(s)))` reproduces `s`.
pub fn emit_annotations(sentence: &AnnotatedSentence) -> SentenceAnnotations {
    let mut ner = Vec::new();
    let mut i = 0;
    let toks = &sentence.tokens;
    while i < toks.len() {
        if toks[i].ner != NerLabel::None {
            let label = toks[i].ner;
            let start = i;
            while i < toks.len() && toks[i].ner == label {
                i += 1;
            }
            ner.push(NerSpan { start, end: i, label: label.name().to_string() });
        } else {
            i += 1;
        }
    }
    SentenceAnnotations { sent_index: sentence.sent_index, ner, coref: Vec::new() }
}

/// Attaches NER labels to a tokenized sentence. With external annotations,
/// labels come from the sidecar (unknown labels map to MISC, counted in the
/// returned warning count); otherwise the fallback annotator runs. Case
/// bits are intrinsic to [`Token`] construction.
pub fn annotate(
    mut sentence: AnnotatedSentence,
    external: Option<&SentenceAnnotations>,
) -> Result<(AnnotatedSentence, usize), CorpusError> {
    let mut warnings = 0usize;
    match external {
        Some(ann) => {
            for span in &ann.ner {
                if span.start >= span.end || span.end > sentence.tokens.len() {
                    return Err(CorpusError::Annotation {
                        doc_id: sentence.doc_id.clone(),
                        sent_index: sentence.sent_index,
                        message: format!(
                            "NER span [{}, {}) out of range for {} tokens",
                            span.start,
                            span.end,
                            sentence.tokens.len()
                        ),
                    });
                }
                let (label, known) = NerLabel::from_external(&span.label);
                if !known {
                    warnings += 1;
                }
                for t in &mut sentence.tokens[span.start..span.end] {
                    t.ner = label;
                }
            }
        }
        None => fallback_annotate(&mut sentence.tokens),
    }
    Ok((sentence, warnings))
}

const MONTHS: &[&str] = &[
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec",
];

const TITLES: &[&str] = &[
    "mr", "mrs", "ms", "dr", "president", "professor", "actress", "actor", "sir", "lady",
    "captain", "king", "queen", "prince", "princess", "general", "senator",
];

const NATIONALITIES: &[&str] = &[
    "japanese", "english", "american", "british", "french", "german", "chinese", "spanish",
    "italian", "russian", "canadian", "australian", "korean", "indian", "mexican", "dutch",
    "swedish", "norwegian", "brazilian", "egyptian",
];

const MAGNITUDES: &[&str] = &["hundred", "thousand", "million", "billion", "trillion"];

const CURRENCY: &[&str] = &["$", "€", "£", "¥"];

fn is_number(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
        && s.chars().any(|c| c.is_ascii_digit())
}

fn is_year(s: &str) -> bool {
    s.len() == 4 && s.chars().all(|c| c.is_ascii_digit()) && {
        let v: u32 = s.parse().unwrap_or(0);
        (1000..3000).contains(&v)
    }
}

/// Deterministic gazetteer-based NER. Rules in application order: months
/// and four-digit years are DATE; currency symbols and the number/magnitude
/// run after them are MONEY; remaining numerals are NUMBER (DATE when
/// adjacent to a month); title, nationality and magnitude gazetteers; then
/// capitalized non-initial tokens become PERSON and all-caps tokens
/// ORGANIZATION.
fn fallback_annotate(tokens: &mut [Token]) {
    let n = tokens.len();
    let lowers: Vec<String> = tokens.iter().map(|t| t.lower.clone()).collect();
    for i in 0..n {
        let low = lowers[i].as_str();
        if MONTHS.contains(&low) {
            tokens[i].ner = NerLabel::Date;
        } else if is_year(low) {
            tokens[i].ner = NerLabel::Date;
        } else if CURRENCY.contains(&low) {
            tokens[i].ner = NerLabel::Money;
        } else if is_number(low) {
            tokens[i].ner = NerLabel::Number;
        } else if MAGNITUDES.contains(&low) {
            // inherits from the preceding amount below
        } else if TITLES.contains(&low) {
            tokens[i].ner = NerLabel::Title;
        } else if NATIONALITIES.contains(&low) {
            tokens[i].ner = NerLabel::Nationality;
        }
    }
    // numbers adjacent to a month read as dates ("may 2015", "june 4")
    for i in 0..n {
        if tokens[i].ner == NerLabel::Number {
            let prev_month = i > 0 && MONTHS.contains(&lowers[i - 1].as_str());
            let next_month = i + 1 < n && MONTHS.contains(&lowers[i + 1].as_str());
            if prev_month || next_month {
                tokens[i].ner = NerLabel::Date;
            }
        }
    }
    // currency propagates across the following number/magnitude run
    for i in 0..n {
        if tokens[i].ner == NerLabel::Money && CURRENCY.contains(&lowers[i].as_str()) {
            let mut j = i + 1;
            while j < n && (is_number(&lowers[j]) || MAGNITUDES.contains(&lowers[j].as_str())) {
                tokens[j].ner = NerLabel::Money;
                j += 1;
            }
        }
    }
    // bare magnitudes after a plain number stay NUMBER ("five million" is
    // out of reach of this annotator; "3 million" is not)
    for i in 1..n {
        if MAGNITUDES.contains(&lowers[i].as_str())
            && tokens[i].ner == NerLabel::None
            && tokens[i - 1].ner == NerLabel::Number
        {
            tokens[i].ner = NerLabel::Number;
        }
    }
    for i in 0..n {
        if tokens[i].ner != NerLabel::None || tokens[i].case_bit == 0 {
            continue;
        }
        let surface = &tokens[i].surface;
        let all_caps = surface.chars().count() >= 2 && surface.chars().all(|c| !c.is_lowercase());
        if all_caps {
            tokens[i].ner = NerLabel::Organization;
        } else if i > 0 {
            tokens[i].ner = NerLabel::Person;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tokenize;
    use super::*;

    fn sentence(text: &str) -> AnnotatedSentence {
        AnnotatedSentence { tokens: tokenize(text), doc_id: "d".into(), sent_index: 0 }
    }

    #[test]
    fn month_year_pair_is_date() {
        let (s, _) = annotate(sentence("As of May 2015, her worth grew."), None).unwrap();
        let may = s.tokens.iter().find(|t| t.lower == "may").unwrap();
        let year = s.tokens.iter().find(|t| t.lower == "2015").unwrap();
        assert_eq!(may.ner, NerLabel::Date);
        assert_eq!(year.ner, NerLabel::Date);
    }

    #[test]
    fn currency_run_is_money() {
        let (s, _) = annotate(sentence("estimated to be $250 million."), None).unwrap();
        let by_lower = |w: &str| s.tokens.iter().find(|t| t.lower == w).unwrap().ner;
        assert_eq!(by_lower("$"), NerLabel::Money);
        assert_eq!(by_lower("250"), NerLabel::Money);
        assert_eq!(by_lower("million"), NerLabel::Money);
    }

    #[test]
    fn lowercase_function_word_is_unlabeled() {
        let (s, _) = annotate(sentence("the character spoke"), None).unwrap();
        assert_eq!(s.tokens[0].case_bit, 0);
        assert_eq!(s.tokens[0].ner, NerLabel::None);
    }

    #[test]
    fn external_round_trip_reproduces_labels() {
        let (orig, _) = annotate(sentence("Akiko Komoto visited Japan in May 2015."), None).unwrap();
        let emitted = emit_annotations(&orig);
        let bare = sentence("Akiko Komoto visited Japan in May 2015.");
        let (back, warnings) = annotate(bare, Some(&emitted)).unwrap();
        assert_eq!(warnings, 0);
        assert_eq!(back, orig);
    }

    #[test]
    fn unknown_external_label_maps_to_misc_with_warning() {
        let ann = SentenceAnnotations {
            sent_index: 0,
            ner: vec![NerSpan { start: 0, end: 1, label: "GIZMO".into() }],
            coref: vec![],
        };
        let (s, warnings) = annotate(sentence("thing happened"), Some(&ann)).unwrap();
        assert_eq!(s.tokens[0].ner, NerLabel::Misc);
        assert_eq!(warnings, 1);
    }

    #[test]
    fn out_of_range_span_names_doc_and_sentence() {
        let ann = SentenceAnnotations {
            sent_index: 3,
            ner: vec![NerSpan { start: 0, end: 99, label: "PERSON".into() }],
            coref: vec![],
        };
        let mut s = sentence("two tokens");
        s.sent_index = 3;
        let err = annotate(s, Some(&ann)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("doc d") && msg.contains("sentence 3"), "{msg}");
    }

    #[test]
    fn titles_and_nationalities() {
        let (s, _) = annotate(sentence("the japanese voice actress spoke"), None).unwrap();
        let by_lower = |w: &str| s.tokens.iter().find(|t| t.lower == w).unwrap().ner;
        assert_eq!(by_lower("japanese"), NerLabel::Nationality);
        assert_eq!(by_lower("actress"), NerLabel::Title);
    }
}
