use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::align::{aggregate_to_words, align_tokens_to_words, gold_word_labels};
use super::segment::segment_words;
use crate::model::{Direction, Side, TranslationRecord};

/// Token-level pathology feature. Target features detect hallucinations,
/// source features detect omissions; all are oriented higher = worse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenFeature {
    Logprob,
    ContrastiveLogprob,
    AltiTotal,
    AltiMax,
    RevLogprob,
    RevContrastiveLogprob,
    AltiTTotal,
    AltiTMax,
}

impl TokenFeature {
    pub const TARGET: [TokenFeature; 4] =
        [TokenFeature::Logprob, TokenFeature::ContrastiveLogprob, TokenFeature::AltiTotal, TokenFeature::AltiMax];
    pub const SOURCE: [TokenFeature; 4] = [
        TokenFeature::RevLogprob,
        TokenFeature::RevContrastiveLogprob,
        TokenFeature::AltiTTotal,
        TokenFeature::AltiTMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TokenFeature::Logprob => "logprob",
            TokenFeature::ContrastiveLogprob => "contrastive_logprob",
            TokenFeature::AltiTotal => "alti_total",
            TokenFeature::AltiMax => "alti_max",
            TokenFeature::RevLogprob => "rev_logprob",
            TokenFeature::RevContrastiveLogprob => "rev_contrastive_logprob",
            TokenFeature::AltiTTotal => "alti_t_total",
            TokenFeature::AltiTMax => "alti_t_max",
        }
    }

    pub fn side(self) -> Side {
        if Self::TARGET.contains(&self) {
            Side::Target
        } else {
            Side::Source
        }
    }

    pub fn for_side(side: Side) -> &'static [TokenFeature] {
        match side {
            Side::Target => &Self::TARGET,
            Side::Source => &Self::SOURCE,
        }
    }
}

impl fmt::Display for TokenFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown token feature {0:?}")]
pub struct UnknownFeature(pub String);

impl FromStr for TokenFeature {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        // "contrastive" is accepted as shorthand on either side
        match s {
            "contrastive" => return Ok(TokenFeature::ContrastiveLogprob),
            "rev_contrastive" => return Ok(TokenFeature::RevContrastiveLogprob),
            _ => {}
        }
        Self::TARGET
            .iter()
            .chain(&Self::SOURCE)
            .find(|f| f.name() == s)
            .copied()
            .ok_or_else(|| UnknownFeature(s.into()))
    }
}

impl Serialize for TokenFeature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TokenFeature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Features of one token. A feature is absent when its trace is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenFeatureRow {
    pub id: String,
    pub side: Side,
    pub token_index: usize,
    pub features: BTreeMap<TokenFeature, f64>,
}

fn rows_for(r: &TranslationRecord, side: Side) -> Vec<TokenFeatureRow> {
    (0..r.tokens(side).len())
        .map(|k| TokenFeatureRow { id: r.id.clone(), side, token_index: k, features: BTreeMap::new() })
        .collect()
}

fn put_logprobs(
    rows: &mut [TokenFeatureRow],
    lp: Option<&Vec<f64>>,
    uncond: Option<&Vec<f64>>,
    plain: TokenFeature,
    contrastive: TokenFeature,
) {
    let Some(lp) = lp.filter(|v| v.len() == rows.len()) else { return };
    for (row, v) in rows.iter_mut().zip(lp) {
        row.features.insert(plain, -v);
    }
    if let Some(u) = uncond.filter(|u| u.len() == rows.len()) {
        for ((row, v), u) in rows.iter_mut().zip(lp).zip(u) {
            row.features.insert(contrastive, -(v - u));
        }
    }
}

/// Target-token hallucination features: negated log-probability, negated
/// gain over the source-free log-probability, and negated total and maximum
/// source contribution.
pub fn token_features_halluc(r: &TranslationRecord) -> Vec<TokenFeatureRow> {
    let mut rows = rows_for(r, Side::Target);
    put_logprobs(
        &mut rows,
        Some(&r.tgt_logprob),
        r.tgt_logprob_uncond.as_ref(),
        TokenFeature::Logprob,
        TokenFeature::ContrastiveLogprob,
    );
    if let Some(m) = r.alti.as_ref().filter(|m| m.n_rows() == rows.len()) {
        for (i, row) in rows.iter_mut().enumerate() {
            row.features.insert(TokenFeature::AltiTotal, -m.row_sum(i));
            row.features.insert(TokenFeature::AltiMax, -m.row_max(i));
        }
    }
    rows
}

/// Source-token omission features: the same signals with source and target
/// swapped (reverse-direction log-probabilities, contribution columns).
pub fn token_features_omission(r: &TranslationRecord) -> Vec<TokenFeatureRow> {
    let mut rows = rows_for(r, Side::Source);
    put_logprobs(
        &mut rows,
        r.src_logprob_rev.as_ref(),
        r.src_logprob_rev_uncond.as_ref(),
        TokenFeature::RevLogprob,
        TokenFeature::RevContrastiveLogprob,
    );
    if let Some(m) = r.alti.as_ref().filter(|m| m.n_rows() > 0 && m.n_cols() == rows.len()) {
        for (j, row) in rows.iter_mut().enumerate() {
            row.features.insert(TokenFeature::AltiTTotal, -m.col_sum(j));
            row.features.insert(TokenFeature::AltiTMax, -m.col_max(j));
        }
    }
    rows
}

pub fn token_features(r: &TranslationRecord, side: Side) -> Vec<TokenFeatureRow> {
    match side {
        Side::Target => token_features_halluc(r),
        Side::Source => token_features_omission(r),
    }
}

/// One word of one record with its aggregated features and gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRow {
    pub id: String,
    pub direction: Direction,
    pub data_source: String,
    pub side: Side,
    pub word_index: usize,
    pub word_text: String,
    pub start: usize,
    pub end: usize,
    pub features: BTreeMap<TokenFeature, f64>,
    /// Present when the record has a usable annotation.
    pub gold: Option<bool>,
}

/// Word rows of one side of a record plus the indices of orphan words,
/// which are left out of the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTable {
    pub rows: Vec<WordRow>,
    pub orphans: Vec<usize>,
}

pub fn word_rows(r: &TranslationRecord, side: Side) -> WordTable {
    let words = segment_words(r.text(side), r.is_han(side));
    let alignment = align_tokens_to_words(r.tokens(side), &words);
    let token_rows = token_features(r, side);
    let gold = r.usable_annotation().map(|_| gold_word_labels(r.gold_spans(side).unwrap_or(&[]), &words));

    let mut per_feature: BTreeMap<TokenFeature, Vec<Option<f64>>> = BTreeMap::new();
    for &f in TokenFeature::for_side(side) {
        let scores: Option<Vec<f64>> = token_rows.iter().map(|t| t.features.get(&f).copied()).collect();
        if let Some(scores) = scores.filter(|s| !s.is_empty()) {
            per_feature.insert(f, aggregate_to_words(&scores, &alignment));
        }
    }

    let rows = words
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !alignment.word_tokens[*i].is_empty())
        .map(|(i, w)| WordRow {
            id: r.id.clone(),
            direction: r.direction.clone(),
            data_source: r.data_source.clone(),
            side,
            word_index: w.index,
            word_text: w.text,
            start: w.start,
            end: w.end,
            features: per_feature.iter().filter_map(|(f, v)| v[i].map(|x| (*f, x))).collect(),
            gold: gold.as_ref().map(|g| g[i]),
        })
        .collect();
    WordTable { rows, orphans: alignment.orphans }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContributionMatrix, TokenSpan};
    use crate::sentence::tests::bare_record;

    #[test]
    fn contrastive_signs() {
        let mut r = bare_record(2, 3);
        r.tgt_logprob = vec![-1.0, -0.5, -2.0];
        r.tgt_logprob_uncond = Some(vec![-1.0, -4.0, -2.5]);
        let rows = token_features_halluc(&r);
        assert_eq!(rows[0].features[&TokenFeature::ContrastiveLogprob], 0.0);
        assert_eq!(rows[1].features[&TokenFeature::ContrastiveLogprob], -3.5);
        assert_eq!(rows[1].features[&TokenFeature::Logprob], 0.5);
    }

    #[test]
    fn alti_row_features() {
        let mut r = bare_record(2, 1);
        r.alti = Some(ContributionMatrix(vec![vec![0.7, 0.2]]));
        let rows = token_features_halluc(&r);
        assert!((rows[0].features[&TokenFeature::AltiTotal] - -0.9).abs() < 1e-15);
        assert_eq!(rows[0].features[&TokenFeature::AltiMax], -0.7);
        assert!(!rows[0].features.contains_key(&TokenFeature::ContrastiveLogprob));
    }

    #[test]
    fn alti_column_features() {
        let mut r = bare_record(2, 2);
        r.alti = Some(ContributionMatrix(vec![vec![0.0, 0.5], vec![0.0, 0.4]]));
        let rows = token_features_omission(&r);
        assert_eq!(rows[0].features[&TokenFeature::AltiTTotal], 0.0);
        assert!((rows[1].features[&TokenFeature::AltiTTotal] - -0.9).abs() < 1e-15);
        assert_eq!(rows[1].features[&TokenFeature::AltiTMax], -0.5);
        // no reverse traces: only the contribution features
        assert_eq!(
            rows[0].features.keys().copied().collect::<Vec<_>>(),
            [TokenFeature::AltiTTotal, TokenFeature::AltiTMax]
        );
    }

    #[test]
    fn feature_names_parse() {
        for f in TokenFeature::TARGET.iter().chain(&TokenFeature::SOURCE) {
            assert_eq!(f.name().parse::<TokenFeature>().unwrap(), *f);
        }
        assert_eq!("contrastive".parse::<TokenFeature>().unwrap(), TokenFeature::ContrastiveLogprob);
        assert!("bleu".parse::<TokenFeature>().is_err());
        assert_eq!(TokenFeature::AltiTMax.side(), Side::Source);
    }

    #[test]
    fn word_rows_aggregate_and_label() {
        let mut r = bare_record(1, 1);
        r.tgt_text = "the redcat".into();
        r.tgt_tokens = vec![TokenSpan::new("the", 0, 3), TokenSpan::new("red", 4, 7), TokenSpan::new("cat", 7, 10)];
        r.tgt_logprob = vec![-0.1, -3.0, -0.2];
        r.annotation = Some(crate::model::Annotation {
            halluc_severity: crate::model::Severity::Word,
            halluc_spans: vec![crate::model::AnnotatedSpan::new(4, 10, Side::Target)],
            ..Default::default()
        });
        let t = word_rows(&r, Side::Target);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1].word_text, "redcat");
        assert_eq!(t.rows[1].features[&TokenFeature::Logprob], 3.0);
        assert_eq!(t.rows.iter().map(|w| w.gold).collect::<Vec<_>>(), [Some(false), Some(true)]);
    }

    #[test]
    fn orphan_words_are_reported_not_scored() {
        let mut r = bare_record(1, 1);
        r.tgt_text = "b lost".into();
        let t = word_rows(&r, Side::Target);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.orphans, vec![1]);
    }
}
