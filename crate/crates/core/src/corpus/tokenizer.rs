//! Rule-based tokenization and sentence splitting.
//!
//! Tokenizer rules, in precedence order:
//! - whitespace always separates tokens;
//! - a word token is a maximal run of letters/digits, which may contain
//!   internal hyphens between alphanumerics ("on-screen") and internal
//!   `.`/`,` between digits ("3.5", "1,000");
//! - an apostrophe inside a word starts a new token that keeps the
//!   apostrophe ("midna's" -> "midna", "'s");
//! - every other character is a single-character token ("$250" -> "$",
//!   "250"; trailing periods split off).
//!
//! Character spans are byte offsets into the input, so concatenating
//! surfaces with the original gaps reproduces the input exactly.

use super::Token;

pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let byte_end = |i: usize| if i + 1 < n { chars[i + 1].0 } else { text.len() };
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < n {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() || c == '\'' || c == '\u{2019}' {
            // word token; a leading apostrophe attaches to the following
            // letters ("'s" split off a possessive)
            let mut j = i + 1;
            while j < n {
                let cj = chars[j].1;
                if cj.is_alphanumeric() {
                    j += 1;
                } else if (cj == '-' || cj == '.' || cj == ',')
                    && j + 1 < n
                    && chars[j + 1].1.is_alphanumeric()
                    && chars[j - 1].1.is_alphanumeric()
                {
                    // internal hyphen between alphanumerics, or
                    // decimal/thousands separator between digits
                    let digits_only = cj != '-';
                    if digits_only && !(chars[j - 1].1.is_ascii_digit() && chars[j + 1].1.is_ascii_digit()) {
                        break;
                    }
                    j += 1;
                } else {
                    break;
                }
            }
            let end = byte_end(j - 1);
            tokens.push(Token::new(&text[start..end], (start, end)));
            i = j;
        } else {
            let end = byte_end(i);
            tokens.push(Token::new(&text[start..end], (start, end)));
            i += 1;
        }
    }
    tokens
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "inc", "ltd", "co", "corp",
    "gen", "rep", "sen", "gov", "capt", "col", "sgt", "fig", "no", "jan", "feb", "mar", "apr",
    "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "e.g", "i.e", "u.s", "u.k", "approx",
];

/// Splits a context into sentence byte ranges. A sentence ends at `.`, `!`
/// or `?` (plus any closing quotes/brackets) when followed by whitespace
/// and an uppercase letter or opening quote, unless the preceding word is a
/// known abbreviation or a single capital (an initial). Every byte of the
/// input belongs to exactly one range.
pub fn split_sentences(context: &str) -> Vec<(usize, usize)> {
    if context.is_empty() {
        return Vec::new();
    }
    let chars: Vec<(usize, char)> = context.char_indices().collect();
    let n = chars.len();
    let mut ranges = Vec::new();
    let mut sent_start = 0usize;
    let mut i = 0;
    while i < n {
        let c = chars[i].1;
        if c == '.' || c == '!' || c == '?' {
            // absorb closing quotes/brackets
            let mut j = i + 1;
            while j < n && matches!(chars[j].1, '"' | '\'' | '\u{201d}' | '\u{2019}' | ')' | ']') {
                j += 1;
            }
            let mut k = j;
            while k < n && chars[k].1.is_whitespace() {
                k += 1;
            }
            let boundary = k > j
                && k < n
                && (chars[k].1.is_uppercase()
                    || matches!(chars[k].1, '"' | '\'' | '\u{201c}' | '\u{2018}' | '(' | '['));
            if boundary && c == '.' && !abbreviation_before(&chars, i) {
                let end = if j < n { chars[j].0 } else { context.len() };
                ranges.push((sent_start, end));
                sent_start = end;
                i = k;
                continue;
            }
            if boundary && c != '.' {
                let end = if j < n { chars[j].0 } else { context.len() };
                ranges.push((sent_start, end));
                sent_start = end;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    if sent_start < context.len() {
        ranges.push((sent_start, context.len()));
    }
    ranges
}

/// True when the word ending just before the period at `chars[dot]` should
/// suppress a sentence break.
fn abbreviation_before(chars: &[(usize, char)], dot: usize) -> bool {
    let mut start = dot;
    while start > 0 && !chars[start - 1].1.is_whitespace() {
        start -= 1;
    }
    let word: String = chars[start..dot].iter().map(|&(_, c)| c).collect();
    if word.is_empty() {
        return false;
    }
    // single capital: an initial like "J."
    if word.chars().count() == 1 && word.chars().next().unwrap().is_uppercase() {
        return true;
    }
    ABBREVIATIONS.contains(&word.to_lowercase().trim_matches('.').trim_matches(|c: char| !c.is_alphanumeric() && c != '.'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_currency_and_final_period() {
        let text = "As of May 2015, her net worth is estimated to be $250 million.";
        let toks = tokenize(text);
        let surfaces: Vec<&str> = toks.iter().map(|t| t.surface.as_str()).collect();
        assert!(surfaces.contains(&"$"));
        assert!(surfaces.contains(&"250"));
        assert!(surfaces.contains(&"million"));
        assert_eq!(surfaces.last(), Some(&"."));
        assert!(surfaces.contains(&"2015"));
        assert!(surfaces.contains(&","));
    }

    #[test]
    fn empty_text_gives_no_tokens() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn possessive_and_hyphen() {
        let toks = tokenize("midna's on-screen dialog");
        let surfaces: Vec<&str> = toks.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(surfaces, vec!["midna", "'s", "on-screen", "dialog"]);
    }

    #[test]
    fn decimal_numbers_stay_whole() {
        let toks = tokenize("paid $3.50 for 1,000 apples.");
        let surfaces: Vec<&str> = toks.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(surfaces, vec!["paid", "$", "3.50", "for", "1,000", "apples", "."]);
    }

    #[test]
    fn spans_round_trip() {
        let text = "As of May 2015, her net worth is $250 million. \"Quite a sum.\"";
        let toks = tokenize(text);
        let mut rebuilt = String::new();
        let mut pos = 0;
        for t in &toks {
            rebuilt.push_str(&text[pos..t.char_span.0]);
            rebuilt.push_str(&t.surface);
            pos = t.char_span.1;
        }
        rebuilt.push_str(&text[pos..]);
        assert_eq!(rebuilt, text);
    }

    #[test]
    fn case_bits_follow_surface() {
        let toks = tokenize("The quick Fox");
        assert_eq!(toks[0].case_bit, 1);
        assert_eq!(toks[1].case_bit, 0);
        assert_eq!(toks[2].case_bit, 1);
        assert_eq!(toks[0].lower, "the");
    }

    #[test]
    fn single_sentence_covers_all() {
        let text = "One plain sentence without end";
        assert_eq!(split_sentences(text), vec![(0, text.len())]);
    }

    #[test]
    fn two_sentences_split_on_period() {
        let text = "First one. Second one.";
        let r = split_sentences(text);
        assert_eq!(r.len(), 2);
        assert_eq!(&text[r[0].0..r[0].1], "First one.");
        assert_eq!(&text[r[1].0..r[1].1].trim_start(), &"Second one.");
    }

    #[test]
    fn abbreviation_does_not_split() {
        let text = "Mr. Smith arrived. He left.";
        let r = split_sentences(text);
        assert_eq!(r.len(), 2, "expected 2 sentences, got {r:?}");
        assert_eq!(&text[r[0].0..r[0].1], "Mr. Smith arrived.");
    }

    #[test]
    fn every_byte_in_exactly_one_sentence() {
        let text = "Dr. Who left in 1963. The show returned! (It was 2005.) Fans rejoiced.";
        let r = split_sentences(text);
        assert_eq!(r[0].0, 0);
        for w in r.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert_eq!(r.last().unwrap().1, text.len());
    }
}
