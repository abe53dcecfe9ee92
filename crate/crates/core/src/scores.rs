//! Score tables: one row per record, one column per detector, with
//! explicit missing cells.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::attn_ot::OtContext;
use crate::model::{Corpus, Direction, Side, TranslationRecord};
use crate::sentence::{self, DetectorError, DetectorId, DetectorScore};
use crate::word::{TokenFeature, WordRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub direction: Direction,
    pub data_source: String,
    /// One cell per detector column; `None` marks a missing input.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub detectors: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("score table format: {0}")]
    Format(String),
}

/// Scores one record with one detector. OT detectors need a context.
pub fn score_record(
    r: &TranslationRecord,
    detector: &DetectorId,
    ot: Option<&OtContext>,
) -> Result<DetectorScore, DetectorError> {
    match detector {
        DetectorId::SeqLogprob => sentence::seq_logprob(r),
        DetectorId::Alti => sentence::alti_mean(r),
        DetectorId::AltiT => sentence::alti_t_mean(r),
        DetectorId::Similarity(e) => sentence::embedding_similarity(r, e),
        DetectorId::External(n) => sentence::external_score(r, n),
        DetectorId::Ot { kind, drop_eos } => match ot {
            Some(ctx) => ctx.score(r, *kind, *drop_eos),
            None if !kind.needs_reference() => OtContext::default().score(r, *kind, *drop_eos),
            None => Err(DetectorError::MissingContext(format!("{detector} needs reference data"))),
        },
    }
}

fn score_row(
    r: &TranslationRecord,
    detectors: &[DetectorId],
    ot: Option<&OtContext>,
) -> Result<ScoreRow, DetectorError> {
    let values = detectors
        .iter()
        .map(|d| match score_record(r, d, ot) {
            Ok(s) => Ok(Some(s.value)),
            Err(e) if e.is_per_record() => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreRow { id: r.id.clone(), direction: r.direction.clone(), data_source: r.data_source.clone(), values })
}

/// Scores every record with every detector, in corpus order. Records
/// lacking a detector's input get a missing cell. The result does not
/// depend on thread count.
pub fn score_corpus(c: &Corpus, detectors: &[DetectorId], ot: Option<&OtContext>) -> Result<ScoreTable, DetectorError> {
    #[cfg(feature = "parallel")]
    let rows = {
        use rayon::prelude::*;
        c.records().par_iter().map(|r| score_row(r, detectors, ot)).collect::<Result<Vec<_>, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows = c.records().iter().map(|r| score_row(r, detectors, ot)).collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreTable { detectors: detectors.iter().map(ToString::to_string).collect(), rows })
}

pub(crate) fn fmt_f64(v: f64) -> String {
    // shortest round-trip representation, never locale-dependent
    format!("{v:?}")
}

const KEY_COLUMNS: [&str; 3] = ["id", "direction", "data_source"];

impl ScoreTable {
    pub fn column(&self, detector: &str) -> Option<usize> {
        self.detectors.iter().position(|d| d == detector)
    }

    pub fn sort_by_id(&mut self) {
        self.rows.sort_by(|a, b| a.id.cmp(&b.id));
    }

    /// Map from record id to the detector's value (missing cells omitted).
    pub fn values_by_id(&self, detector: &str) -> Option<HashMap<&str, f64>> {
        let col = self.column(detector)?;
        Some(self.rows.iter().filter_map(|r| r.values[col].map(|v| (r.id.as_str(), v))).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TableError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(KEY_COLUMNS.iter().copied().chain(self.detectors.iter().map(String::as_str)))?;
        for r in &self.rows {
            let mut rec = vec![r.id.clone(), r.direction.to_string(), r.data_source.clone()];
            rec.extend(r.values.iter().map(|v| v.map(fmt_f64).unwrap_or_default()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TableError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || headers.iter().take(3).ne(KEY_COLUMNS) {
            return Err(TableError::Format("expected leading columns id,direction,data_source".into()));
        }
        let detectors: Vec<String> = headers.iter().skip(3).map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let direction = rec[1].parse().map_err(|e| TableError::Format(format!("row {}: {e}", i + 1)))?;
            let values = rec
                .iter()
                .skip(3)
                .map(|cell| {
                    if cell.is_empty() {
                        return Ok(None);
                    }
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Some)
                        .ok_or_else(|| TableError::Format(format!("row {}: bad value {cell:?}", i + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(ScoreRow { id: rec[0].to_string(), direction, data_source: rec[2].to_string(), values });
        }
        Ok(Self { detectors, rows })
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), TableError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Word-level scores: one row per (record, side, word), one column per
/// feature or model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScoreRow {
    pub id: String,
    pub direction: Direction,
    pub data_source: String,
    pub side: Side,
    pub word_index: usize,
    pub word_text: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WordScoreTable {
    pub detectors: Vec<String>,
    pub rows: Vec<WordScoreRow>,
}

pub type WordKey = (String, Side, usize);

const WORD_KEY_COLUMNS: [&str; 6] = ["id", "direction", "data_source", "side", "word_index", "word_text"];

impl WordScoreTable {
    /// Lays out `features` of `rows`; features a row lacks become missing cells.
    pub fn from_word_rows(rows: &[WordRow], features: &[TokenFeature]) -> Self {
        Self {
            detectors: features.iter().map(ToString::to_string).collect(),
            rows: rows
                .iter()
                .map(|r| WordScoreRow {
                    id: r.id.clone(),
                    direction: r.direction.clone(),
                    data_source: r.data_source.clone(),
                    side: r.side,
                    word_index: r.word_index,
                    word_text: r.word_text.clone(),
                    values: features.iter().map(|f| r.features.get(f).copied()).collect(),
                })
                .collect(),
        }
    }

    pub fn push_column(&mut self, name: &str, values: Vec<Option<f64>>) {
        assert_eq!(values.len(), self.rows.len(), "column length");
        self.detectors.push(name.into());
        for (r, v) in self.rows.iter_mut().zip(values) {
            r.values.push(v);
        }
    }

    pub fn column(&self, detector: &str) -> Option<usize> {
        self.detectors.iter().position(|d| d == detector)
    }

    /// Canonical order: id, then side, then word index.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| (&a.id, a.side, a.word_index).cmp(&(&b.id, b.side, b.word_index)));
    }

    pub fn values_by_key(&self, detector: &str) -> Option<HashMap<WordKey, f64>> {
        let col = self.column(detector)?;
        Some(
            self.rows.iter().filter_map(|r| r.values[col].map(|v| ((r.id.clone(), r.side, r.word_index), v))).collect(),
        )
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TableError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(WORD_KEY_COLUMNS.iter().copied().chain(self.detectors.iter().map(String::as_str)))?;
        for r in &self.rows {
            let mut rec = vec![
                r.id.clone(),
                r.direction.to_string(),
                r.data_source.clone(),
                r.side.to_string(),
                r.word_index.to_string(),
                r.word_text.clone(),
            ];
            rec.extend(r.values.iter().map(|v| v.map(fmt_f64).unwrap_or_default()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TableError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let k = WORD_KEY_COLUMNS.len();
        if headers.len() < k || headers.iter().take(k).ne(WORD_KEY_COLUMNS) {
            return Err(TableError::Format(format!("expected leading columns {}", WORD_KEY_COLUMNS.join(","))));
        }
        let detectors: Vec<String> = headers.iter().skip(k).map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| TableError::Format(format!("row {}: bad {what}", i + 1));
            let side = match &rec[3] {
                "source" => Side::Source,
                "target" => Side::Target,
                _ => return Err(bad("side")),
            };
            let values = rec
                .iter()
                .skip(k)
                .map(|cell| {
                    if cell.is_empty() {
                        return Ok(None);
                    }
                    cell.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some).ok_or_else(|| bad("value"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(WordScoreRow {
                id: rec[0].to_string(),
                direction: rec[1].parse().map_err(|_| bad("direction"))?,
                data_source: rec[2].to_string(),
                side,
                word_index: rec[4].parse().map_err(|_| bad("word_index"))?,
                word_text: rec[5].to_string(),
                values,
            });
        }
        Ok(Self { detectors, rows })
    }
}
