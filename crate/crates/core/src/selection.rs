//! Picking records for annotation from detector score tables.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Corpus;
use crate::scores::ScoreTable;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("detector {detector:?} has no score for {ids:?}")]
    MissingScores { detector: String, ids: Vec<String> },
    #[error("asked for {requested} records but only {available} are eligible")]
    NotEnoughRecords { requested: usize, available: usize },
    #[error("at least one detector is required")]
    NoDetectors,
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Quantile,
    Worst,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Uniform => "uniform",
            Strategy::Quantile => "quantile",
            Strategy::Worst => "worst",
        })
    }
}

impl FromStr for Strategy {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Strategy::Uniform),
            "quantile" => Ok(Strategy::Quantile),
            "worst" => Ok(Strategy::Worst),
            _ => Err(SelectionError::UnknownStrategy(s.into())),
        }
    }
}

fn score_columns(table: &ScoreTable, ids: &[&str], detectors: &[String]) -> Result<Vec<Vec<f64>>, SelectionError> {
    if detectors.is_empty() {
        return Err(SelectionError::NoDetectors);
    }
    detectors
        .iter()
        .map(|d| {
            let values = table.values_by_id(d).unwrap_or_default();
            let missing: Vec<String> =
                ids.iter().filter(|id| !values.contains_key(*id)).map(|id| id.to_string()).collect();
            if !missing.is_empty() {
                return Err(SelectionError::MissingScores { detector: d.clone(), ids: missing });
            }
            Ok(ids.iter().map(|id| values[id]).collect())
        })
        .collect()
}

/// Per-detector quantile rank (average rank for ties, divided by n),
/// averaged over detectors. Aligned with `ids`.
pub fn quantile_weights(table: &ScoreTable, ids: &[&str], detectors: &[String]) -> Result<Vec<f64>, SelectionError> {
    let cols = score_columns(table, ids, detectors)?;
    let n = ids.len() as f64;
    let mut w = vec![0.0; ids.len()];
    for col in &cols {
        for (wi, r) in w.iter_mut().zip(crate::stats::average_ranks(col)) {
            *wi += r / n;
        }
    }
    for wi in &mut w {
        *wi /= cols.len() as f64;
    }
    Ok(w)
}

/// What was selected and how, for the audit file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionAudit {
    pub strategy: Strategy,
    pub seed: u64,
    pub n: usize,
    pub detectors: Vec<String>,
    pub excluded: usize,
    pub eligible: usize,
    pub ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<(String, f64)>>,
}

/// Selects `n` distinct ids from the corpus, skipping `exclude`. Records
/// are considered in id order, so the result does not depend on file
/// order.
pub fn select(
    corpus: &Corpus,
    table: &ScoreTable,
    detectors: &[String],
    strategy: Strategy,
    n: usize,
    seed: u64,
    exclude: &BTreeSet<String>,
) -> Result<SelectionAudit, SelectionError> {
    let mut ids: Vec<&str> =
        corpus.records().iter().map(|r| r.id.as_str()).filter(|id| !exclude.contains(*id)).collect();
    ids.sort_unstable();
    if n > ids.len() {
        return Err(SelectionError::NotEnoughRecords { requested: n, available: ids.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights_out = None;
    let picked: Vec<usize> = match strategy {
        Strategy::Uniform => rand::seq::index::sample(&mut rng, ids.len(), n).into_vec(),
        Strategy::Quantile => {
            let mut w = quantile_weights(table, &ids, detectors)?;
            weights_out = Some(ids.iter().map(|s| s.to_string()).zip(w.iter().copied()).collect());
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let total: f64 = w.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut chosen = None;
                for (i, wi) in w.iter().enumerate() {
                    if *wi <= 0.0 {
                        continue;
                    }
                    chosen = Some(i);
                    if u < *wi {
                        break;
                    }
                    u -= wi;
                }
                let i = chosen.expect("positive weight remains");
                w[i] = 0.0;
                out.push(i);
            }
            out
        }
        Strategy::Worst => {
            let cols = score_columns(table, &ids, detectors)?;
            let orders: Vec<Vec<usize>> = cols
                .iter()
                .map(|col| {
                    let mut o: Vec<usize> = (0..ids.len()).collect();
                    // descending score, then ascending id (ids are sorted)
                    o.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
                    o
                })
                .collect();
            let mut taken = vec![false; ids.len()];
            let mut cursors = vec![0usize; orders.len()];
            let mut out = Vec::with_capacity(n);
            'outer: while out.len() < n {
                for (d, order) in orders.iter().enumerate() {
                    if out.len() == n {
                        break 'outer;
                    }
                    while cursors[d] < order.len() && taken[order[cursors[d]]] {
                        cursors[d] += 1;
                    }
                    if let Some(&i) = order.get(cursors[d]) {
                        taken[i] = true;
                        out.push(i);
                    }
                }
            }
            out
        }
    };
    Ok(SelectionAudit {
        strategy,
        seed,
        n,
        detectors: detectors.to_vec(),
        excluded: corpus.len() - ids.len(),
        eligible: ids.len(),
        ids: picked.into_iter().map(|i| ids[i].to_string()).collect(),
        weights: weights_out,
    })
}
