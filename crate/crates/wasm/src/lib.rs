//! Browser bindings for three toolkit operations. Every export takes and
//! returns JSON text; failures come back as `{"error": "..."}`.

use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use mtpath::attn_ot::{wass1_positions, wass_to_data, wass_to_unif, OtParams, ReferenceSet};
use mtpath::eval::{pairwise_ranking_score, roc_auc};
use mtpath::model::{parse_span_markup, AnnotatedSpan, AttentionDistribution, Direction, Side};
use mtpath::word::{gold_word_labels, segment_words};

fn respond(result: Result<serde_json::Value, String>) -> String {
    result.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

fn normalized(mass: &[f64]) -> Result<AttentionDistribution, String> {
    if mass.is_empty() {
        return Err("attention needs at least one source token".into());
    }
    if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err("attention weights must be finite and non-negative".into());
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err("attention weights sum to zero".into());
    }
    Ok(AttentionDistribution::new(mass.iter().map(|m| m / total).collect(), false))
}

#[derive(Deserialize)]
struct AttentionRequest {
    query: Vec<f64>,
    #[serde(default)]
    references: Vec<Vec<f64>>,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    window: Option<f64>,
}

#[derive(Serialize)]
struct ReferenceDistance {
    index: usize,
    length: usize,
    distance: f64,
}

pub fn attention_scores_json(request: &str) -> Result<serde_json::Value, String> {
    let req: AttentionRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let query = normalized(&req.query)?;
    let mut out = json!({
        "normalized": query.mass,
        "wass_to_unif": wass_to_unif(&query),
    });
    if !req.references.is_empty() {
        let distributions = req.references.iter().map(|r| normalized(r)).collect::<Result<Vec<_>, _>>()?;
        let defaults = OtParams::default();
        let params = OtParams {
            k: req.k.unwrap_or(defaults.k).max(1),
            window: req.window.unwrap_or(defaults.window),
            ..defaults
        };
        let distances: Vec<ReferenceDistance> = distributions
            .iter()
            .enumerate()
            .map(|(index, d)| ReferenceDistance { index, length: d.len(), distance: wass1_positions(&query, d) })
            .collect();
        let set = ReferenceSet {
            direction: Direction::new("xxx", "Latn", "yyy", "Latn"),
            drop_eos: false,
            ids: (0..distributions.len()).map(|i| i.to_string()).collect(),
            source_lengths: distributions.iter().map(AttentionDistribution::len).collect(),
            distributions,
        };
        out["wass_to_data"] = json!(wass_to_data(&query, &set, &params));
        out["distances"] = json!(distances);
        out["k"] = json!(params.k);
        out["window"] = json!(params.window);
    }
    Ok(out)
}

/// Wass-to-Unif for a query attention vector, plus Wass-to-Data and the
/// per-reference distances when reference vectors are given.
#[wasm_bindgen]
pub fn attention_scores(request: &str) -> String {
    respond(attention_scores_json(request))
}

#[derive(Deserialize)]
struct RankingRequest {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

pub fn ranking_score_json(request: &str) -> Result<serde_json::Value, String> {
    let req: RankingRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let score = pairwise_ranking_score(&req.scores, &req.labels).map_err(|e| e.to_string())?;
    let (mut pairs, mut wrong, mut tied) = (0u64, 0u64, 0u64);
    for (i, li) in req.labels.iter().enumerate() {
        for (j, lj) in req.labels.iter().enumerate() {
            if li < lj {
                pairs += 1;
                if req.scores[i] > req.scores[j] {
                    wrong += 1;
                } else if req.scores[i] == req.scores[j] {
                    tied += 1;
                }
            }
        }
    }
    let levels: std::collections::BTreeSet<u8> = req.labels.iter().copied().collect();
    let auc = if levels.len() == 2 {
        let top = *levels.last().expect("two levels");
        Some(
            roc_auc(&req.scores, &req.labels.iter().map(|&l| l == top).collect::<Vec<_>>())
                .map_err(|e| e.to_string())?,
        )
    } else {
        None
    };
    Ok(json!({ "score": score, "pairs": pairs, "misordered": wrong, "tied": tied, "roc_auc": auc }))
}

/// Pairwise ranking score of pathology scores against ordinal labels,
/// with the pair counts behind it.
#[wasm_bindgen]
pub fn ranking_score(request: &str) -> String {
    respond(ranking_score_json(request))
}

#[derive(Serialize)]
struct LabeledWord {
    index: usize,
    text: String,
    start: usize,
    end: usize,
    label: bool,
}

pub fn label_words_json(marked: &str, han: bool) -> Result<serde_json::Value, String> {
    let (plain, ranges) = parse_span_markup(marked, "<<", ">>").map_err(|e| e.to_string())?;
    let spans: Vec<AnnotatedSpan> = ranges.iter().map(|r| AnnotatedSpan::new(r.start, r.end, Side::Target)).collect();
    let words = segment_words(&plain, han);
    let labels = gold_word_labels(&spans, &words);
    let words: Vec<LabeledWord> = words
        .into_iter()
        .zip(labels)
        .map(|(w, label)| LabeledWord { index: w.index, text: w.text, start: w.start, end: w.end, label })
        .collect();
    let spans: Vec<[usize; 2]> = ranges.iter().map(|r| [r.start, r.end]).collect();
    Ok(json!({ "text": plain, "spans": spans, "words": words }))
}

/// Segments `<<span>>`-marked text into words and labels each word that
/// overlaps a marked span.
#[wasm_bindgen]
pub fn label_words(marked: &str, han: bool) -> String {
    respond(label_words_json(marked, han))
}
