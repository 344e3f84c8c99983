//! Answer-span to token alignment.

use super::{CorpusError, Token};

/// Maps a character-level answer onto tokens: returns the minimal token
/// range `[i, j)` whose spans cover `[offset, offset + len)`, including
/// partially overlapping tokens. An offset pointing at whitespace between
/// tokens snaps to the next token.
///
/// `offset` is a byte offset local to the tokenized sentence.
pub fn align_answer(
    tokens: &[Token],
    answer_text: &str,
    offset: usize,
    question_id: &str,
) -> Result<(usize, usize), CorpusError> {
    if tokens.is_empty() || answer_text.is_empty() {
        return Err(CorpusError::Alignment {
            question_id: question_id.to_string(),
            message: "empty sentence or answer".into(),
        });
    }
    let mut start = offset;
    // snap a whitespace/gap offset forward to the next token start
    if !tokens.iter().any(|t| t.char_span.0 <= start && start < t.char_span.1) {
        match tokens.iter().map(|t| t.char_span.0).filter(|&s| s >= start).min() {
            Some(next) => start = next,
            None => {
                return Err(CorpusError::Alignment {
                    question_id: question_id.to_string(),
                    message: format!("answer offset {offset} is past the last token"),
                })
            }
        }
    }
    // the end stays anchored to the original offset; snapping only moves
    // the start forward past whitespace
    let end = (offset + answer_text.len()).max(start + 1);
    let mut first = None;
    let mut last = None;
    for (i, t) in tokens.iter().enumerate() {
        if t.inserted_bit == 1 {
            continue;
        }
        let (s, e) = t.char_span;
        if s < end && e > start {
            if first.is_none() {
                first = Some(i);
            }
            last = Some(i);
        }
    }
    match (first, last) {
        (Some(i), Some(j)) => Ok((i, j + 1)),
        _ => Err(CorpusError::Alignment {
            question_id: question_id.to_string(),
            message: format!("no tokens overlap answer at [{start}, {end})"),
        }),
    }
}
