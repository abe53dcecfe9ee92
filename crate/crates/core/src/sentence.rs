//! Sentence-level pathology scores. Every detector returns a value where
//! higher means more pathological; raw quality signals are negated here and
//! nowhere else.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::TranslationRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectorError {
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("zero embedding vector for encoder {0:?}")]
    ZeroVector(String),
    #[error("degenerate attention mass: {0}")]
    DegenerateMass(String),
    #[error("degenerate calibration: {0}")]
    DegenerateCalibration(String),
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
    #[error("no reference data or calibration for {0}")]
    MissingContext(String),
}

impl DetectorError {
    /// Per-record problems that leave a missing cell rather than aborting a
    /// whole scoring run.
    pub fn is_per_record(&self) -> bool {
        matches!(self, DetectorError::MissingInput(_) | DetectorError::ZeroVector(_) | DetectorError::DegenerateMass(_))
    }
}

/// Trace fields a detector reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceField {
    TgtLogprob,
    Alti,
    Attn,
    Embeddings,
    ExternalScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OtKind {
    WassToUnif,
    WassToData,
    WassCombo,
    WassMean,
}

impl OtKind {
    fn name(self) -> &'static str {
        match self {
            OtKind::WassToUnif => "wass_to_unif",
            OtKind::WassToData => "wass_to_data",
            OtKind::WassCombo => "wass_combo",
            OtKind::WassMean => "wass_mean",
        }
    }

    /// Whether the detector needs a reference set (and calibration).
    pub fn needs_reference(self) -> bool {
        !matches!(self, OtKind::WassToUnif)
    }

    pub fn needs_calibration(self) -> bool {
        matches!(self, OtKind::WassCombo | OtKind::WassMean)
    }
}

/// Sentence-level detector identifier. Renders as `seq_logprob`, `alti`,
/// `alti_t`, `sim:<encoder>`, `ext:<name>`, or an OT name with an optional
/// `_noeos` suffix for the EOS-dropped variant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorId {
    SeqLogprob,
    Alti,
    AltiT,
    Similarity(String),
    External(String),
    Ot { kind: OtKind, drop_eos: bool },
}

impl DetectorId {
    pub fn requires(&self) -> &'static [TraceField] {
        match self {
            DetectorId::SeqLogprob => &[TraceField::TgtLogprob],
            DetectorId::Alti | DetectorId::AltiT => &[TraceField::Alti],
            DetectorId::Similarity(_) => &[TraceField::Embeddings],
            DetectorId::External(_) => &[TraceField::ExternalScores],
            DetectorId::Ot { .. } => &[TraceField::Attn],
        }
    }

    pub fn with_drop_eos(self, drop: bool) -> Self {
        match self {
            DetectorId::Ot { kind, .. } => DetectorId::Ot { kind, drop_eos: drop },
            other => other,
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorId::SeqLogprob => f.write_str("seq_logprob"),
            DetectorId::Alti => f.write_str("alti"),
            DetectorId::AltiT => f.write_str("alti_t"),
            DetectorId::Similarity(e) => write!(f, "sim:{e}"),
            DetectorId::External(n) => write!(f, "ext:{n}"),
            DetectorId::Ot { kind, drop_eos } => {
                write!(f, "{}{}", kind.name(), if *drop_eos { "_noeos" } else { "" })
            }
        }
    }
}

impl FromStr for DetectorId {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(e) = s.strip_prefix("sim:").filter(|e| !e.is_empty()) {
            return Ok(DetectorId::Similarity(e.into()));
        }
        if let Some(n) = s.strip_prefix("ext:").filter(|n| !n.is_empty()) {
            return Ok(DetectorId::External(n.into()));
        }
        let (base, drop_eos) = match s.strip_suffix("_noeos") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let kind = match base {
            "seq_logprob" if !drop_eos => return Ok(DetectorId::SeqLogprob),
            "alti" if !drop_eos => return Ok(DetectorId::Alti),
            "alti_t" if !drop_eos => return Ok(DetectorId::AltiT),
            "wass_to_unif" => OtKind::WassToUnif,
            "wass_to_data" => OtKind::WassToData,
            "wass_combo" => OtKind::WassCombo,
            "wass_mean" => OtKind::WassMean,
            _ => return Err(DetectorError::UnknownDetector(s.into())),
        };
        Ok(DetectorId::Ot { kind, drop_eos })
    }
}

impl Serialize for DetectorId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DetectorId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A detector's value for one record, oriented so that higher is worse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    pub detector: DetectorId,
    pub value: f64,
}

impl DetectorScore {
    pub fn new(detector: DetectorId, value: f64) -> Self {
        debug_assert!(value.is_finite(), "{detector} produced {value}");
        Self { detector, value }
    }
}

fn missing(what: &str) -> DetectorError {
    DetectorError::MissingInput(what.into())
}

/// Negated mean target-token log-probability.
pub fn seq_logprob(r: &TranslationRecord) -> Result<DetectorScore, DetectorError> {
    if r.tgt_logprob.is_empty() {
        return Err(missing("tgt_logprob"));
    }
    let mean = r.tgt_logprob.iter().sum::<f64>() / r.tgt_logprob.len() as f64;
    Ok(DetectorScore::new(DetectorId::SeqLogprob, -mean))
}

/// Raw mean source contribution per target token, in [0, 1].
pub fn alti_raw(r: &TranslationRecord) -> Result<f64, DetectorError> {
    let m = r.alti.as_ref().filter(|m| m.n_rows() > 0).ok_or_else(|| missing("alti"))?;
    Ok(m.row_sums().iter().sum::<f64>() / m.n_rows() as f64)
}

/// Raw mean usage per source token (column sums may exceed 1).
pub fn alti_t_raw(r: &TranslationRecord) -> Result<f64, DetectorError> {
    let m = r.alti.as_ref().filter(|m| m.n_rows() > 0 && m.n_cols() > 0).ok_or_else(|| missing("alti"))?;
    Ok(m.col_sums().iter().sum::<f64>() / m.n_cols() as f64)
}

pub fn alti_mean(r: &TranslationRecord) -> Result<DetectorScore, DetectorError> {
    Ok(DetectorScore::new(DetectorId::Alti, -alti_raw(r)?))
}

pub fn alti_t_mean(r: &TranslationRecord) -> Result<DetectorScore, DetectorError> {
    Ok(DetectorScore::new(DetectorId::AltiT, -alti_t_raw(r)?))
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| (dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Negated cosine similarity between source and target sentence embeddings.
pub fn embedding_similarity(r: &TranslationRecord, encoder: &str) -> Result<DetectorScore, DetectorError> {
    let pair =
        r.embeddings.as_ref().and_then(|m| m.get(encoder)).ok_or_else(|| missing(&format!("embeddings.{encoder}")))?;
    let cos = cosine(pair.source(), pair.target()).ok_or_else(|| DetectorError::ZeroVector(encoder.into()))?;
    Ok(DetectorScore::new(DetectorId::Similarity(encoder.into()), -cos))
}

/// Negated precomputed quality score (stored as higher = better).
pub fn external_score(r: &TranslationRecord, name: &str) -> Result<DetectorScore, DetectorError> {
    let v = r
        .external_scores
        .as_ref()
        .and_then(|m| m.get(name))
        .ok_or_else(|| missing(&format!("external_scores.{name}")))?;
    Ok(DetectorScore::new(DetectorId::External(name.into()), -v))
}
