use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::direction::Direction;
use super::markup::Delimiters;
use super::record::{validate_record, Side, TranslationRecord, Violation};
use super::severity::{LabelMap, Severity};

/// Violations collected for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordViolations {
    pub id: String,
    pub line: usize,
    pub violations: Vec<Violation>,
}

impl fmt::Display for RecordViolations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {} (line {}):", self.id, self.line)?;
        for v in &self.violations {
            write!(f, " [{v}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error on line {line}, field `{field}`: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error("{} invalid record(s): {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation(Vec<RecordViolations>),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("annotation overlay references unknown id {0:?}")]
    UnknownId(String),
}

/// Corpus-specific reading conventions: span delimiters and extra label strings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    #[serde(default)]
    pub delimiters: Delimiters,
    #[serde(default)]
    pub labels: LabelMap,
}

/// An immutable, id-unique collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<TranslationRecord>,
    manifest: BTreeMap<(Direction, String), usize>,
}

impl Corpus {
    pub fn new(records: Vec<TranslationRecord>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        let mut manifest = BTreeMap::new();
        for r in &records {
            *manifest.entry((r.direction.clone(), r.data_source.clone())).or_insert(0) += 1;
        }
        Ok(Self { records, manifest })
    }

    pub fn empty() -> Self {
        Self { records: Vec::new(), manifest: BTreeMap::new() }
    }

    pub fn records(&self) -> &[TranslationRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TranslationRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record counts per (direction, data source).
    pub fn manifest(&self) -> &BTreeMap<(Direction, String), usize> {
        &self.manifest
    }

    pub fn get(&self, id: &str) -> Option<&TranslationRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn directions(&self) -> Vec<Direction> {
        let mut d: Vec<Direction> = self.manifest.keys().map(|(d, _)| d.clone()).collect();
        d.dedup();
        d
    }

    /// Keeps the records matching `keep`, in order.
    pub fn filtered(&self, mut keep: impl FnMut(&TranslationRecord) -> bool) -> Corpus {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Corpus::new(records).expect("subset of a unique-id corpus")
    }
}

fn schema_err(line: usize, field: impl Into<String>, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema { line, field: field.into(), message: message.into() }
}

/// Rewrites label strings through the label map and expands inline markup
/// fields (`halluc_markup`, `omission_markup`) into span lists. Problems
/// with the markup itself are record violations, not schema errors.
fn normalize_annotation(
    ann: &mut Map<String, Value>,
    src_text: Option<&str>,
    tgt_text: Option<&str>,
    opts: &LoadOptions,
    violations: &mut Vec<Violation>,
) {
    for key in ["halluc_severity", "omission_severity"] {
        if let Some(Value::String(s)) = ann.get(key) {
            if let Some(sev) = opts.labels.resolve(s) {
                ann.insert(key.into(), Value::from(sev.level()));
            }
        }
    }
    for (markup_key, spans_key, side, text) in [
        ("halluc_markup", "halluc_spans", Side::Target, tgt_text),
        ("omission_markup", "omission_spans", Side::Source, src_text),
    ] {
        let Some(marked) = ann.remove(markup_key) else { continue };
        let field = format!("annotation.{markup_key}");
        let Value::String(marked) = marked else {
            violations.push(Violation::new(field, "markup must be a string"));
            continue;
        };
        if ann.contains_key(spans_key) {
            violations.push(Violation::new(field, format!("given together with {spans_key}")));
            continue;
        }
        match opts.delimiters.parse(&marked) {
            Err(e) => violations.push(Violation::new(field, e.to_string())),
            Ok((plain, spans)) => {
                if text.is_some_and(|t| t != plain) {
                    violations.push(Violation::new(field, format!("annotated text differs from the {side} text")));
                }
                let spans: Vec<Value> = spans
                    .into_iter()
                    .map(|r| serde_json::json!({"start": r.start, "end": r.end, "side": side.as_str()}))
                    .collect();
                ann.insert(spans_key.into(), Value::Array(spans));
            }
        }
    }
}

fn decode_record(
    line_no: usize,
    line: &str,
    opts: &LoadOptions,
) -> Result<(TranslationRecord, Vec<Violation>), CorpusError> {
    let mut value: Value = serde_json::from_str(line).map_err(|e| schema_err(line_no, "<line>", e.to_string()))?;
    let mut violations = Vec::new();
    if let Value::Object(obj) = &mut value {
        let src = obj.get("src_text").and_then(Value::as_str).map(str::to_owned);
        let tgt = obj.get("tgt_text").and_then(Value::as_str).map(str::to_owned);
        if let Some(Value::Object(ann)) = obj.get_mut("annotation") {
            normalize_annotation(ann, src.as_deref(), tgt.as_deref(), opts, &mut violations);
        }
    }
    let record: TranslationRecord = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        schema_err(line_no, field, e.into_inner().to_string())
    })?;
    Ok((record, violations))
}

/// Reads records from a JSON-Lines trace bundle without checking record
/// invariants. Each record comes with the violations found while expanding
/// its annotation markup.
pub fn read_records(
    path: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<Vec<(usize, TranslationRecord, Vec<Violation>)>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (record, violations) = decode_record(i + 1, &line, opts)?;
        out.push((i + 1, record, violations));
    }
    Ok(out)
}

/// Every record's violations, including markup problems. Records without
/// violations are omitted.
pub fn validation_report(records: &[(usize, TranslationRecord, Vec<Violation>)]) -> Vec<RecordViolations> {
    records
        .iter()
        .filter_map(|(line, r, pre)| {
            let mut violations = pre.clone();
            violations.extend(validate_record(r));
            (!violations.is_empty()).then(|| RecordViolations { id: r.id.clone(), line: *line, violations })
        })
        .collect()
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    load_corpus_with(path, &LoadOptions::default())
}

/// Loads and validates a trace bundle. Fails with the full violation list
/// if any record is invalid.
pub fn load_corpus_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Corpus, CorpusError> {
    let records = read_records(path, opts)?;
    let report = validation_report(&records);
    if !report.is_empty() {
        return Err(CorpusError::Validation(report));
    }
    Corpus::new(records.into_iter().map(|(_, r, _)| r).collect())
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in corpus.records() {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Merges an annotation overlay (one JSON object per line: `id` plus
/// annotation fields) into a corpus, then re-validates.
pub fn merge_annotations(corpus: Corpus, overlay: impl AsRef<Path>, opts: &LoadOptions) -> Result<Corpus, CorpusError> {
    let mut records = corpus.into_records();
    let index: HashMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    let reader = BufReader::new(File::open(overlay)?);
    let mut report = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let value: Value = serde_json::from_str(&line).map_err(|e| schema_err(line_no, "<line>", e.to_string()))?;
        let Value::Object(mut obj) = value else {
            return Err(schema_err(line_no, "<line>", "expected a JSON object"));
        };
        let id = match obj.remove("id") {
            Some(Value::String(id)) => id,
            _ => return Err(schema_err(line_no, "id", "missing or non-string id")),
        };
        let &idx = index.get(&id).ok_or_else(|| CorpusError::UnknownId(id.clone()))?;
        let mut violations = Vec::new();
        let rec = &mut records[idx];
        normalize_annotation(&mut obj, Some(&rec.src_text), Some(&rec.tgt_text), opts, &mut violations);
        let ann = serde_path_to_error::deserialize(Value::Object(obj)).map_err(|e| {
            let field = e.path().to_string();
            schema_err(line_no, field, e.into_inner().to_string())
        })?;
        rec.annotation = Some(ann);
        violations.extend(validate_record(rec));
        if !violations.is_empty() {
            report.push(RecordViolations { id, line: line_no, violations });
        }
    }
    if !report.is_empty() {
        return Err(CorpusError::Validation(report));
    }
    Corpus::new(records)
}

/// Drops unannotated and incomprehensible records, preserving order.
pub fn filter_evaluable(c: &Corpus) -> Corpus {
    c.filtered(|r| r.usable_annotation().is_some())
}

/// Per-direction severity rates over usable annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub records: usize,
    /// Fraction of records at each hallucination level, indexed by level.
    pub halluc: [f64; 4],
    pub omission: [f64; 4],
    pub halluc_counts: [usize; 4],
    pub omission_counts: [usize; 4],
}

impl DirectionStats {
    pub fn halluc_rate(&self, s: Severity) -> f64 {
        self.halluc[s.level() as usize]
    }

    pub fn omission_rate(&self, s: Severity) -> f64 {
        self.omission[s.level() as usize]
    }

    /// Fraction with any hallucination (level above None).
    pub fn any_halluc(&self) -> f64 {
        (self.records - self.halluc_counts[0]) as f64 / self.records as f64
    }

    pub fn any_omission(&self) -> f64 {
        (self.records - self.omission_counts[0]) as f64 / self.records as f64
    }
}

/// Severity rates per direction. Directions without usable annotations are
/// absent from the map.
pub fn corpus_stats(c: &Corpus) -> BTreeMap<Direction, DirectionStats> {
    let mut counts: BTreeMap<Direction, ([usize; 4], [usize; 4], usize)> = BTreeMap::new();
    for r in c.records() {
        let Some(a) = r.usable_annotation() else { continue };
        let e = counts.entry(r.direction.clone()).or_insert(([0; 4], [0; 4], 0));
        e.0[a.halluc_severity.level() as usize] += 1;
        e.1[a.omission_severity.level() as usize] += 1;
        e.2 += 1;
    }
    counts
        .into_iter()
        .map(|(d, (h, o, n))| {
            let rate = |v: [usize; 4]| v.map(|k| k as f64 / n as f64);
            (d, DirectionStats { records: n, halluc: rate(h), omission: rate(o), halluc_counts: h, omission_counts: o })
        })
        .collect()
}
