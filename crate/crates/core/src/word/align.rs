use serde::{Deserialize, Serialize};

use super::segment::WordSpan;
use crate::model::{AnnotatedSpan, TokenSpan};

/// Tokens covering each word. Words that no token overlaps are orphans:
/// they get an empty list and are reported separately.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub word_tokens: Vec<Vec<usize>>,
    pub orphans: Vec<usize>,
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Maps each word to every token sharing at least one character with it.
pub fn align_tokens_to_words(tokens: &[TokenSpan], words: &[WordSpan]) -> Alignment {
    let mut out = Alignment { word_tokens: Vec::with_capacity(words.len()), orphans: Vec::new() };
    for (w_idx, w) in words.iter().enumerate() {
        let toks: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| overlaps((t.start, t.end), (w.start, w.end)))
            .map(|(i, _)| i)
            .collect();
        if toks.is_empty() {
            out.orphans.push(w_idx);
        }
        out.word_tokens.push(toks);
    }
    out
}

/// Word score as the worst (largest) pathology score among its tokens;
/// `None` for orphan words.
pub fn aggregate_to_words(token_scores: &[f64], alignment: &Alignment) -> Vec<Option<f64>> {
    alignment.word_tokens.iter().map(|toks| toks.iter().map(|&t| token_scores[t]).reduce(f64::max)).collect()
}

/// 1 for each word overlapping any annotated span by at least one character.
pub fn gold_word_labels(spans: &[AnnotatedSpan], words: &[WordSpan]) -> Vec<bool> {
    words.iter().map(|w| spans.iter().any(|s| overlaps((s.start, s.end), (w.start, w.end)))).collect()
}
