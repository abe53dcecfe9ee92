use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// A word with its character range in the sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub index: usize,
}

fn default_rule() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}\p{M}]+|[^\s\p{L}\p{N}\p{M}]").unwrap())
}

fn han_rule() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{Han}|[[\p{L}\p{N}\p{M}]--\p{Han}]+|[^\s\p{L}\p{N}\p{M}]").unwrap())
}

/// Splits text into words: runs of letters, digits and marks form words,
/// every other non-space character is a word of its own. With `is_han`,
/// each Han character is also a separate word.
pub fn segment_words(text: &str, is_han: bool) -> Vec<WordSpan> {
    let re = if is_han { han_rule() } else { default_rule() };
    let mut words = Vec::new();
    let mut byte_pos = 0;
    let mut char_pos = 0;
    for m in re.find_iter(text) {
        char_pos += text[byte_pos..m.start()].chars().count();
        let len = m.as_str().chars().count();
        words.push(WordSpan { text: m.as_str().to_string(), start: char_pos, end: char_pos + len, index: words.len() });
        char_pos += len;
        byte_pos = m.end();
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(ws: &[WordSpan]) -> Vec<&str> {
        ws.iter().map(|w| w.text.as_str()).collect()
    }

    #[test]
    fn words_and_punctuation() {
        let ws = segment_words("Hello, world!", false);
        assert_eq!(texts(&ws), ["Hello", ",", "world", "!"]);
        assert_eq!((ws[2].start, ws[2].end, ws[2].index), (7, 12, 2));
        assert!(segment_words("", false).is_empty());
        assert!(segment_words("  \t ", true).is_empty());
    }

    #[test]
    fn han_characters_are_words() {
        let ws = segment_words("我爱你", true);
        assert_eq!(texts(&ws), ["我", "爱", "你"]);
        assert_eq!(ws.iter().map(|w| (w.start, w.end)).collect::<Vec<_>>(), [(0, 1), (1, 2), (2, 3)]);
        // without the Han rule the run stays one word
        assert_eq!(segment_words("我爱你", false).len(), 1);
        assert_eq!(texts(&segment_words("用Rust写。", true)), ["用", "Rust", "写", "。"]);
    }

    #[test]
    fn marks_stay_inside_words() {
        // Devanagari vowel signs are combining marks
        let ws = segment_words("नमस्ते दुनिया", false);
        assert_eq!(texts(&ws), ["नमस्ते", "दुनिया"]);
        assert_eq!(ws[1].start, 7);
    }

    #[test]
    fn digits_and_symbols() {
        assert_eq!(texts(&segment_words("cost: $12.50", false)), ["cost", ":", "$", "12", ".", "50"]);
        assert_eq!(texts(&segment_words("don't", false)), ["don", "'", "t"]);
    }

    proptest! {
        #[test]
        fn words_partition_non_space_text(text in "[a-zA-Zéü0-9 ,.!?'\\-\\t]{0,40}") {
            let ws = segment_words(&text, false);
            let chars: Vec<char> = text.chars().collect();
            let mut covered = vec![false; chars.len()];
            let mut prev_end = 0;
            for (i, w) in ws.iter().enumerate() {
                prop_assert_eq!(w.index, i);
                prop_assert!(w.start >= prev_end && w.start < w.end);
                let slice: String = chars[w.start..w.end].iter().collect();
                prop_assert_eq!(&slice, &w.text);
                prop_assert!(!w.text.chars().any(char::is_whitespace));
                for c in &mut covered[w.start..w.end] { *c = true; }
                prev_end = w.end;
            }
            for (c, cov) in chars.iter().zip(covered) {
                prop_assert_eq!(cov, !c.is_whitespace());
            }
        }
    }
}
