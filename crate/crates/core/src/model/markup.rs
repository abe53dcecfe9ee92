//! Inline span markup such as `the <<red>> cat`.
//!
//! Offsets are character (Unicode scalar) positions in the markup-free text.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarkupError {
    #[error("unbalanced markup: {0}")]
    Unbalanced(String),
    #[error("nested markup: delimiter opened inside an open span at character {0}")]
    Nested(usize),
    #[error("empty span at character {0}")]
    EmptySpan(usize),
    #[error("invalid delimiters: {0}")]
    InvalidDelimiters(String),
}

/// Span delimiter pair used by a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delimiters {
    pub open: String,
    pub close: String,
}

impl Default for Delimiters {
    fn default() -> Self {
        Self { open: "<<".into(), close: ">>".into() }
    }
}

impl Delimiters {
    pub fn new(open: &str, close: &str) -> Self {
        Self { open: open.into(), close: close.into() }
    }

    pub fn parse(&self, marked: &str) -> Result<(String, Vec<Range<usize>>), MarkupError> {
        parse_span_markup(marked, &self.open, &self.close)
    }

    pub fn render(&self, plain: &str, spans: &[Range<usize>]) -> String {
        render_span_markup(plain, spans, &self.open, &self.close)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    Open,
    Close,
}

/// Splits `marked` into delimiter events and plain characters. The longer
/// delimiter wins when one is a prefix of the other.
fn lex<'a>(marked: &'a str, open: &str, close: &str) -> Vec<Result<Mark, char>> {
    let (first, second) = if open.len() >= close.len() {
        ((open, Mark::Open), (close, Mark::Close))
    } else {
        ((close, Mark::Close), (open, Mark::Open))
    };
    let mut out = Vec::new();
    let mut rest: &'a str = marked;
    while let Some(c) = rest.chars().next() {
        if rest.starts_with(first.0) {
            out.push(Ok(first.1));
            rest = &rest[first.0.len()..];
        } else if rest.starts_with(second.0) {
            out.push(Ok(second.1));
            rest = &rest[second.0.len()..];
        } else {
            out.push(Err(c));
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

pub fn parse_span_markup(marked: &str, open: &str, close: &str) -> Result<(String, Vec<Range<usize>>), MarkupError> {
    if open.is_empty() || close.is_empty() || open == close {
        return Err(MarkupError::InvalidDelimiters(format!("{open:?} / {close:?}")));
    }
    let events = lex(marked, open, close);
    let opens = events.iter().filter(|e| matches!(e, Ok(Mark::Open))).count();
    let closes = events.iter().filter(|e| matches!(e, Ok(Mark::Close))).count();
    if opens != closes {
        return Err(MarkupError::Unbalanced(format!("{opens} opening vs {closes} closing delimiters")));
    }

    let mut plain = String::with_capacity(marked.len());
    let mut pos = 0usize;
    let mut current: Option<usize> = None;
    let mut spans = Vec::new();
    for event in events {
        match event {
            Err(c) => {
                plain.push(c);
                pos += 1;
            }
            Ok(Mark::Open) => {
                if current.is_some() {
                    return Err(MarkupError::Nested(pos));
                }
                current = Some(pos);
            }
            Ok(Mark::Close) => match current.take() {
                None => {
                    return Err(MarkupError::Unbalanced(format!(
                        "closing delimiter without an open span at character {pos}"
                    )))
                }
                Some(start) if start == pos => return Err(MarkupError::EmptySpan(pos)),
                Some(start) => spans.push(start..pos),
            },
        }
    }
    // counts are equal, so a dangling open implies an earlier stray close
    if let Some(start) = current {
        return Err(MarkupError::Unbalanced(format!("span opened at character {start} is never closed")));
    }
    Ok((plain, spans))
}

/// Inverse of [`parse_span_markup`] for sorted, non-overlapping spans.
pub fn render_span_markup(plain: &str, spans: &[Range<usize>], open: &str, close: &str) -> String {
    let mut out = String::with_capacity(plain.len() + spans.len() * (open.len() + close.len()));
    let mut it = spans.iter().peekable();
    let mut in_span: Option<&Range<usize>> = None;
    let n = plain.chars().count();
    for (i, c) in plain.chars().enumerate() {
        if let Some(r) = in_span {
            if r.end == i {
                out.push_str(close);
                in_span = None;
            }
        }
        if in_span.is_none() {
            if let Some(r) = it.peek() {
                if r.start == i {
                    out.push_str(open);
                    in_span = it.next();
                }
            }
        }
        out.push(c);
    }
    if let Some(r) = in_span {
        if r.end == n {
            out.push_str(close);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_span() {
        let (plain, spans) = parse_span_markup("the <red> cat", "<", ">").unwrap();
        assert_eq!(plain, "the red cat");
        assert_eq!(spans, vec![4..7]);
    }

    #[test]
    fn no_spans() {
        let (plain, spans) = parse_span_markup("no spans here", "<", ">").unwrap();
        assert_eq!(plain, "no spans here");
        assert!(spans.is_empty());
    }

    #[test]
    fn unmatched_open_is_unbalanced() {
        assert!(matches!(parse_span_markup("a <b <c> d", "<", ">"), Err(MarkupError::Unbalanced(_))));
        assert!(matches!(parse_span_markup("a >b< c", "<", ">"), Err(MarkupError::Unbalanced(_))));
        assert!(matches!(parse_span_markup("a b>", "<", ">"), Err(MarkupError::Unbalanced(_))));
    }

    #[test]
    fn nested_and_empty() {
        assert_eq!(parse_span_markup("<a <b> c>", "<", ">"), Err(MarkupError::Nested(2)));
        assert_eq!(parse_span_markup("a <> b", "<", ">"), Err(MarkupError::EmptySpan(2)));
    }

    #[test]
    fn bad_delimiters() {
        assert!(matches!(parse_span_markup("x", "", ">"), Err(MarkupError::InvalidDelimiters(_))));
        assert!(matches!(parse_span_markup("x", "|", "|"), Err(MarkupError::InvalidDelimiters(_))));
    }

    #[test]
    fn default_delimiters_leave_single_angle_brackets() {
        let d = Delimiters::default();
        let (plain, spans) = d.parse("a < b <<c>> d").unwrap();
        assert_eq!(plain, "a < b c d");
        assert_eq!(spans, vec![6..7]);
    }

    #[test]
    fn offsets_count_characters() {
        let (plain, spans) = parse_span_markup("日本<語>です", "<", ">").unwrap();
        assert_eq!(plain, "日本語です");
        assert_eq!(spans, vec![2..3]);
        assert_eq!(render_span_markup(&plain, &spans, "<", ">"), "日本<語>です");
    }

    #[test]
    fn adjacent_spans_render_back() {
        let marked = "[[a]][[b]] c";
        let (plain, spans) = parse_span_markup(marked, "[[", "]]").unwrap();
        assert_eq!(spans, vec![0..1, 1..2]);
        assert_eq!(render_span_markup(&plain, &spans, "[[", "]]"), marked);
    }

    fn marked_strategy() -> impl Strategy<Value = String> {
        let piece =
            prop_oneof!["[a-zé語 ,.]{0,6}".prop_map(|s| (s, false)), "[a-zé語 ,.]{1,6}".prop_map(|s| (s, true)),];
        proptest::collection::vec(piece, 0..8).prop_map(|pieces| {
            pieces.into_iter().map(|(s, marked)| if marked { format!("<<{s}>>") } else { s }).collect()
        })
    }

    proptest! {
        #[test]
        fn parse_then_render_is_identity(marked in marked_strategy()) {
            let (plain, spans) = parse_span_markup(&marked, "<<", ">>").unwrap();
            prop_assert!(spans.windows(2).all(|w| w[0].end <= w[1].start));
            prop_assert!(spans.iter().all(|r| r.start < r.end && r.end <= plain.chars().count()));
            prop_assert_eq!(render_span_markup(&plain, &spans, "<<", ">>"), marked);
        }
    }
}
