use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::direction::Direction;
use super::severity::Severity;

/// Tolerance on attention mass at ingestion (exports are float32).
pub const ATTN_INGEST_TOL: f64 = 1e-4;
/// Tolerance on attention mass after any renormalization.
pub const ATTN_RENORM_TOL: f64 = 1e-12;
/// Slack allowed on a contribution-matrix row sum above 1.
pub const ROW_MASS_TOL: f64 = 1e-6;

/// A subword token with its character range in the parent text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(text: impl Into<String>, start: usize, end: usize) -> Self {
        Self { text: text.into(), start, end }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Source => "source",
            Side::Target => "target",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Annotated character range in the markup-free text of one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSpan {
    pub start: usize,
    pub end: usize,
    pub side: Side,
}

impl AnnotatedSpan {
    pub fn new(start: usize, end: usize, side: Side) -> Self {
        Self { start, end, side }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Annotation {
    pub halluc_severity: Severity,
    pub omission_severity: Severity,
    #[serde(default)]
    pub halluc_spans: Vec<AnnotatedSpan>,
    #[serde(default)]
    pub omission_spans: Vec<AnnotatedSpan>,
    #[serde(default)]
    pub incomprehensible: bool,
}

impl Annotation {
    /// Whether the record can take part in evaluation.
    pub fn is_usable(&self) -> bool {
        !self.incomprehensible
    }

    /// The worst of the two pathology levels.
    pub fn pathology(&self) -> Severity {
        self.halluc_severity.max(self.omission_severity)
    }
}

/// Source-token contributions to each target token: rows are target tokens,
/// columns source tokens.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContributionMatrix(pub Vec<Vec<f64>>);

impl ContributionMatrix {
    pub fn n_rows(&self) -> usize {
        self.0.len()
    }

    pub fn n_cols(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.0[i]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.0[i].iter().sum()
    }

    pub fn row_max(&self, i: usize) -> f64 {
        self.0[i].iter().copied().fold(0.0, f64::max)
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        self.0.iter().map(|r| r[j]).sum()
    }

    pub fn col_max(&self, j: usize) -> f64 {
        self.0.iter().map(|r| r[j]).fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row_sum(i)).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n_cols()).map(|j| self.col_sum(j)).collect()
    }

    pub fn is_rectangular(&self) -> bool {
        let w = self.n_cols();
        self.0.iter().all(|r| r.len() == w)
    }
}

/// Cross-attention mass over source positions, optionally followed by the
/// end-of-sentence position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDistribution {
    pub mass: Vec<f64>,
    #[serde(default)]
    pub has_eos: bool,
}

impl AttentionDistribution {
    pub fn new(mass: Vec<f64>, has_eos: bool) -> Self {
        Self { mass, has_eos }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Number of source-token positions, excluding EOS.
    pub fn source_len(&self) -> usize {
        self.mass.len() - usize::from(self.has_eos && !self.mass.is_empty())
    }
}

/// Sentence embeddings of source and target from one encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPair(pub Vec<f64>, pub Vec<f64>);

impl EmbeddingPair {
    pub fn source(&self) -> &[f64] {
        &self.0
    }

    pub fn target(&self) -> &[f64] {
        &self.1
    }
}

/// One source/translation pair with tokenization, model traces and
/// optional gold annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub id: String,
    pub direction: Direction,
    pub data_source: String,
    pub src_text: String,
    pub tgt_text: String,
    pub src_tokens: Vec<TokenSpan>,
    pub tgt_tokens: Vec<TokenSpan>,
    pub tgt_logprob: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_logprob_uncond: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alti: Option<ContributionMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attn: Option<AttentionDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_logprob_rev: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_logprob_rev_uncond: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<BTreeMap<String, EmbeddingPair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
}

impl TranslationRecord {
    pub fn text(&self, side: Side) -> &str {
        match side {
            Side::Source => &self.src_text,
            Side::Target => &self.tgt_text,
        }
    }

    pub fn tokens(&self, side: Side) -> &[TokenSpan] {
        match side {
            Side::Source => &self.src_tokens,
            Side::Target => &self.tgt_tokens,
        }
    }

    pub fn is_han(&self, side: Side) -> bool {
        match side {
            Side::Source => self.direction.src_is_han(),
            Side::Target => self.direction.tgt_is_han(),
        }
    }

    /// Annotation if present and not flagged incomprehensible.
    pub fn usable_annotation(&self) -> Option<&Annotation> {
        self.annotation.as_ref().filter(|a| a.is_usable())
    }

    /// Gold spans on one side: hallucinations live on the target, omissions
    /// on the source.
    pub fn gold_spans(&self, side: Side) -> Option<&[AnnotatedSpan]> {
        self.annotation.as_ref().map(|a| match side {
            Side::Target => a.halluc_spans.as_slice(),
            Side::Source => a.omission_spans.as_slice(),
        })
    }
}

/// One broken invariant: the offending field and the rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self { field: field.into(), rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Returns the substring covering characters `[start, end)`.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut idx = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let b0 = idx.nth(start)?;
    let b1 = if end == start { b0 } else { idx.nth(end - start - 1)? };
    Some(&text[b0..b1])
}

fn check_tokens(out: &mut Vec<Violation>, field: &str, tokens: &[TokenSpan], text: &str) {
    let len = text.chars().count();
    for (k, t) in tokens.iter().enumerate() {
        if t.start >= t.end || t.end > len {
            out.push(Violation::new(
                format!("{field}[{k}]"),
                format!("range [{}, {}) invalid for text of {len} characters", t.start, t.end),
            ));
        } else if char_slice(text, t.start, t.end) != Some(t.text.as_str()) {
            out.push(Violation::new(
                format!("{field}[{k}]"),
                format!("token text {:?} differs from text slice [{}, {})", t.text, t.start, t.end),
            ));
        }
    }
}

fn check_logprobs(out: &mut Vec<Violation>, field: &str, values: &[f64], expected_len: usize, what: &str) {
    if values.len() != expected_len {
        out.push(Violation::new(field, format!("length {} does not match {expected_len} {what}", values.len())));
    }
    for (k, v) in values.iter().enumerate() {
        if !v.is_finite() {
            out.push(Violation::new(format!("{field}[{k}]"), "non-finite log-probability"));
        } else if *v > 0.0 {
            out.push(Violation::new(format!("{field}[{k}]"), "positive log-probability"));
        }
    }
}

fn check_spans(out: &mut Vec<Violation>, field: &str, spans: &[AnnotatedSpan], side: Side, text_len: usize) {
    for (k, s) in spans.iter().enumerate() {
        if s.side != side {
            out.push(Violation::new(format!("{field}[{k}]"), format!("span must be on the {side} side")));
        }
        if s.start >= s.end {
            out.push(Violation::new(format!("{field}[{k}]"), "empty span"));
        } else if s.end > text_len {
            out.push(Violation::new(
                format!("{field}[{k}]"),
                format!("span [{}, {}) exceeds text of {text_len} characters", s.start, s.end),
            ));
        }
    }
    for (k, w) in spans.windows(2).enumerate() {
        if w[1].start < w[0].end {
            out.push(Violation::new(format!("{field}[{}]", k + 1), "spans overlap or are not sorted by start"));
        }
    }
}

/// Lists every broken record invariant. An empty list means the record is
/// well-formed.
pub fn validate_record(r: &TranslationRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if r.id.is_empty() {
        out.push(Violation::new("id", "empty id"));
    }
    check_tokens(&mut out, "src_tokens", &r.src_tokens, &r.src_text);
    check_tokens(&mut out, "tgt_tokens", &r.tgt_tokens, &r.tgt_text);
    let n_src = r.src_tokens.len();
    let n_tgt = r.tgt_tokens.len();

    check_logprobs(&mut out, "tgt_logprob", &r.tgt_logprob, n_tgt, "target tokens");
    if let Some(u) = &r.tgt_logprob_uncond {
        check_logprobs(&mut out, "tgt_logprob_uncond", u, n_tgt, "target tokens");
    }
    if let Some(v) = &r.src_logprob_rev {
        check_logprobs(&mut out, "src_logprob_rev", v, n_src, "source tokens");
    }
    if let Some(v) = &r.src_logprob_rev_uncond {
        check_logprobs(&mut out, "src_logprob_rev_uncond", v, n_src, "source tokens");
    }

    if let Some(m) = &r.alti {
        if !m.is_rectangular() {
            out.push(Violation::new("alti", "rows have different lengths"));
        } else if m.n_rows() != n_tgt || (n_tgt > 0 && m.n_cols() != n_src) {
            out.push(Violation::new(
                "alti",
                format!("shape {}x{} does not match {n_tgt}x{n_src} tokens", m.n_rows(), m.n_cols()),
            ));
        } else {
            for (i, row) in m.0.iter().enumerate() {
                if let Some(j) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                    out.push(Violation::new(format!("alti[{i}][{j}]"), "entry must be finite and non-negative"));
                    continue;
                }
                let s: f64 = row.iter().sum();
                if s > 1.0 + ROW_MASS_TOL {
                    out.push(Violation::new(format!("alti[{i}]"), format!("row sum {s} exceeds 1")));
                }
            }
        }
    }

    if let Some(a) = &r.attn {
        let expected = n_src + usize::from(a.has_eos);
        if a.mass.len() != expected {
            out.push(Violation::new(
                "attn",
                format!(
                    "{} positions, expected {expected} (source tokens{})",
                    a.mass.len(),
                    if a.has_eos { " + EOS" } else { "" }
                ),
            ));
        }
        if let Some(j) = a.mass.iter().position(|v| !v.is_finite() || *v < 0.0) {
            out.push(Violation::new(format!("attn.mass[{j}]"), "mass must be finite and non-negative"));
        } else {
            let total = a.total();
            if (total - 1.0).abs() > ATTN_INGEST_TOL {
                out.push(Violation::new("attn", format!("mass sums to {total}, expected 1±1e-4")));
            }
        }
    }

    if let Some(emb) = &r.embeddings {
        for (name, pair) in emb {
            if pair.0.is_empty() || pair.0.len() != pair.1.len() {
                out.push(Violation::new(
                    format!("embeddings.{name}"),
                    format!("dimensions {} and {} must be equal and positive", pair.0.len(), pair.1.len()),
                ));
            } else if pair.0.iter().chain(&pair.1).any(|v| !v.is_finite()) {
                out.push(Violation::new(format!("embeddings.{name}"), "non-finite component"));
            }
        }
    }
    if let Some(ext) = &r.external_scores {
        for (name, v) in ext {
            if !v.is_finite() {
                out.push(Violation::new(format!("external_scores.{name}"), "non-finite score"));
            }
        }
    }

    if let Some(a) = &r.annotation {
        check_spans(&mut out, "annotation.halluc_spans", &a.halluc_spans, Side::Target, r.tgt_text.chars().count());
        check_spans(&mut out, "annotation.omission_spans", &a.omission_spans, Side::Source, r.src_text.chars().count());
        if !a.incomprehensible {
            if (a.halluc_severity == Severity::None) != a.halluc_spans.is_empty() {
                out.push(Violation::new(
                    "annotation.halluc_spans",
                    format!("severity {} inconsistent with {} spans", a.halluc_severity, a.halluc_spans.len()),
                ));
            }
            if (a.omission_severity == Severity::None) != a.omission_spans.is_empty() {
                out.push(Violation::new(
                    "annotation.omission_spans",
                    format!("severity {} inconsistent with {} spans", a.omission_severity, a.omission_spans.len()),
                ));
            }
        }
    }
    out
}
