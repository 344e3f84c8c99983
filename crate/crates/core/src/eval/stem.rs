//! Suffix stemmer used by the simplified METEOR alignment.
//!
//! A small deterministic rule subset, applied in three passes to the
//! lowercase word:
//!
//! 1. plural endings: `sses -> ss`, `ies -> i`, `ss` kept, trailing `s`
//!    dropped (words longer than 2);
//! 2. participle endings: `eed -> ee`, `ing` dropped (words longer than
//!    5), `ed` dropped (words longer than 4);
//! 3. adverb ending: `ly` dropped (words longer than 4).
//!
//! Within each pass only the first matching rule applies.

pub fn stem(word: &str) -> String {
    let mut w = word.to_string();
    // pass 1: plurals
    if let Some(base) = w.strip_suffix("sses") {
        w = format!("{base}ss");
    } else if let Some(base) = w.strip_suffix("ies") {
        w = format!("{base}i");
    } else if w.ends_with("ss") {
        // kept
    } else if w.ends_with('s') && w.len() > 2 {
        w.pop();
    }
    // pass 2: participles
    if let Some(base) = w.strip_suffix("eed") {
        w = format!("{base}ee");
    } else if w.ends_with("ing") && w.len() > 5 {
        w.truncate(w.len() - 3);
    } else if w.ends_with("ed") && w.len() > 4 {
        w.truncate(w.len() - 2);
    }
    // pass 3: adverbs
    if w.ends_with("ly") && w.len() > 4 {
        w.truncate(w.len() - 2);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stem_rules() {
        assert_eq!(stem("cats"), "cat");
        assert_eq!(stem("classes"), "class");
        assert_eq!(stem("ponies"), "poni");
        assert_eq!(stem("press"), "press");
        assert_eq!(stem("agreed"), "agree");
        assert_eq!(stem("walking"), "walk");
        assert_eq!(stem("jumped"), "jump");
        assert_eq!(stem("quickly"), "quick");
        assert_eq!(stem("is"), "is", "short words stay whole");
        assert_eq!(stem("sing"), "sing", "length guard on -ing");
    }
}
