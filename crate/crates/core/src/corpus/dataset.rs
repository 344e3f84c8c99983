//! Question-answering dataset ingestion (articles -> paragraphs -> context
//! plus QA pairs with answer start offsets).

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::CorpusError;

/// One (document, question, answer) record. The context is preserved
/// verbatim; `answer_start` has been converted from the dataset's character
/// (codepoint) offset convention to a byte offset into `context`.
#[derive(Debug, Clone)]
pub struct QaRecord {
    pub doc_id: String,
    pub paragraph_index: usize,
    pub question_id: String,
    pub context: String,
    pub question: String,
    pub answer_text: String,
    pub answer_start: usize,
}

#[derive(Deserialize)]
struct RawDataset {
    data: Vec<RawArticle>,
}

#[derive(Deserialize)]
struct RawArticle {
    #[serde(default)]
    title: String,
    paragraphs: Vec<RawParagraph>,
}

#[derive(Deserialize)]
struct RawParagraph {
    context: String,
    qas: Vec<RawQa>,
}

#[derive(Deserialize)]
struct RawQa {
    #[serde(default)]
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<RawAnswer>,
}

#[derive(Deserialize)]
struct RawAnswer {
    text: String,
    answer_start: Option<usize>,
}

pub fn load_dataset(path: &Path) -> Result<(Vec<QaRecord>, usize), CorpusError> {
    let text = fs::read_to_string(path)?;
    load_dataset_str(&text)
}

/// Parses the dataset JSON. Returns the records plus the number of QA pairs
/// skipped for missing answer offsets. Each QA pair yields one record (the
/// first listed answer is used); malformed JSON is a parse error carrying
/// the byte position.
pub fn load_dataset_str(text: &str) -> Result<(Vec<QaRecord>, usize), CorpusError> {
    let raw: RawDataset = serde_json::from_str(text).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        CorpusError::Parse {
            offset: byte_offset(text, line, column),
            line,
            column,
            message: e.to_string(),
        }
    })?;
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (ai, article) in raw.data.iter().enumerate() {
        let doc_id = if article.title.is_empty() { format!("doc{ai}") } else { article.title.clone() };
        for (pi, para) in article.paragraphs.iter().enumerate() {
            for qa in &para.qas {
                let Some(ans) = qa.answers.first() else {
                    skipped += 1;
                    continue;
                };
                let Some(char_start) = ans.answer_start else {
                    skipped += 1;
                    continue;
                };
                let Some(byte_start) = char_to_byte(&para.context, char_start) else {
                    skipped += 1;
                    continue;
                };
                records.push(QaRecord {
                    doc_id: doc_id.clone(),
                    paragraph_index: pi,
                    question_id: if qa.id.is_empty() {
                        format!("{doc_id}-p{pi}-q{}", records.len())
                    } else {
                        qa.id.clone()
                    },
                    context: para.context.clone(),
                    question: qa.question.clone(),
                    answer_text: ans.text.clone(),
                    answer_start: byte_start,
                });
            }
        }
    }
    Ok((records, skipped))
}

fn char_to_byte(s: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    s.char_indices().nth(char_idx).map(|(b, _)| b)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut current = 1usize;
    let mut offset = 0usize;
    for l in text.split_inclusive('\n') {
        if current == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
        current += 1;
    }
    offset
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
      "data": [
        {
          "title": "fixture",
          "paragraphs": [
            {
              "context": "Ada Lovelace was born in London in 1815.",
              "qas": [
                {"id": "q1", "question": "Where was Ada Lovelace born?",
                 "answers": [{"text": "London", "answer_start": 25}]}
              ]
            }
          ]
        }
      ]
    }"#;

    #[test]
    fn minimal_fixture_yields_one_record() {
        let (records, skipped) = load_dataset_str(MINIMAL).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(skipped, 0);
        let r = &records[0];
        assert_eq!(&r.context[r.answer_start..r.answer_start + 6], "London");
    }

    #[test]
    fn two_questions_share_context() {
        let text = r#"{"data":[{"title":"t","paragraphs":[{"context":"Ada was born in London. She wrote programs.","qas":[
            {"id":"a","question":"Where was Ada born?","answers":[{"text":"London","answer_start":16}]},
            {"id":"b","question":"Who wrote programs?","answers":[{"text":"Ada","answer_start":0}]}
        ]}]}]}"#;
        let (records, _) = load_dataset_str(text).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].context, records[1].context);
    }

    #[test]
    fn missing_answer_is_skipped_and_counted() {
        let text = r#"{"data":[{"title":"t","paragraphs":[{"context":"Some text.","qas":[
            {"id":"a","question":"What?","answers":[]},
            {"id":"b","question":"Where?","answers":[{"text":"text","answer_start":5}]}
        ]}]}]}"#;
        let (records, skipped) = load_dataset_str(text).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn malformed_json_reports_byte_position() {
        let err = load_dataset_str("{\n  \"data\": [oops]\n}").unwrap_err();
        match err {
            CorpusError::Parse { offset, line, .. } => {
                assert_eq!(line, 2);
                assert!(offset > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn codepoint_offsets_convert_to_bytes() {
        // "é" is two bytes but one character
        let text = r#"{"data":[{"title":"t","paragraphs":[{"context":"Beyoncé earned $115 million.","qas":[
            {"id":"a","question":"How much?","answers":[{"text":"$115 million","answer_start":15}]}
        ]}]}]}"#;
        let (records, _) = load_dataset_str(text).unwrap();
        let r = &records[0];
        assert_eq!(&r.context[r.answer_start..r.answer_start + 4], "$115");
    }
}
