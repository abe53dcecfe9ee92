//! Detection tasks, the pairwise ranking metric, ROC AUC, per-direction
//! evaluation and matched stratified downsampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Corpus, Direction, Severity, Side, TranslationRecord};
use crate::scores::{fmt_f64, ScoreTable, TableError};
use crate::word::{word_rows, WordRow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("labels must take at least two distinct values")]
    DegenerateLabels,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("no direction has two or more distinct labels for {0}")]
    NoEvaluableDirections(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("detector {0:?} is not in the score table")]
    UnknownDetector(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    SentHalluc,
    SentOmission,
    SentPathology,
    WordHalluc,
    WordOmission,
}

impl TaskId {
    pub const ALL: [TaskId; 5] =
        [TaskId::SentHalluc, TaskId::SentOmission, TaskId::SentPathology, TaskId::WordHalluc, TaskId::WordOmission];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::SentHalluc => "sent_halluc",
            TaskId::SentOmission => "sent_omission",
            TaskId::SentPathology => "sent_pathology",
            TaskId::WordHalluc => "word_halluc",
            TaskId::WordOmission => "word_omission",
        }
    }

    pub fn is_word_level(self) -> bool {
        matches!(self, TaskId::WordHalluc | TaskId::WordOmission)
    }

    /// Side whose words are labeled, for word-level tasks.
    pub fn side(self) -> Option<Side> {
        match self {
            TaskId::WordHalluc => Some(Side::Target),
            TaskId::WordOmission => Some(Side::Source),
            _ => None,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.iter().find(|t| t.name() == s.trim()).copied().ok_or_else(|| EvalError::UnknownTask(s.into()))
    }
}

/// One labeled sentence of a sentence-level task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceInstance {
    pub id: String,
    pub direction: Direction,
    pub data_source: String,
    pub label: Severity,
}

fn sentence_label(r: &TranslationRecord, task: TaskId) -> Option<Severity> {
    let a = r.usable_annotation()?;
    match task {
        TaskId::SentHalluc => Some(a.halluc_severity),
        TaskId::SentOmission => (a.halluc_severity == Severity::None).then_some(a.omission_severity),
        TaskId::SentPathology => Some(a.pathology()),
        TaskId::WordHalluc | TaskId::WordOmission => None,
    }
}

/// Labeled sentences for a sentence-level task: hallucination level over
/// all records, omission level over hallucination-free records, or the
/// worst of both. Unannotated and incomprehensible records are skipped.
pub fn build_sentence_task(c: &Corpus, task: TaskId) -> Vec<SentenceInstance> {
    c.records()
        .iter()
        .filter_map(|r| {
            sentence_label(r, task).map(|label| SentenceInstance {
                id: r.id.clone(),
                direction: r.direction.clone(),
                data_source: r.data_source.clone(),
                label,
            })
        })
        .collect()
}

/// Labeled words for a word-level task, with the number of orphan words
/// that had to be left out.
pub fn build_word_task(c: &Corpus, task: TaskId) -> (Vec<WordRow>, usize) {
    let Some(side) = task.side() else { return (Vec::new(), 0) };
    let mut rows = Vec::new();
    let mut orphans = 0;
    for r in c.records().iter().filter(|r| r.usable_annotation().is_some()) {
        let t = word_rows(r, side);
        orphans += t.orphans.len();
        rows.extend(t.rows);
    }
    (rows, orphans)
}

fn check_inputs<T>(scores: &[f64], labels: &[T]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    Ok(())
}

/// `1 - (incorrect + 0.5 * tied) / total` over cross-label pairs. Both
/// metric routes finish through this expression.
fn score_from_penalty(penalty: f64, total: u64) -> f64 {
    1.0 - penalty / total as f64
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, i: usize, v: u64) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over indices `< i`.
    fn prefix(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Fraction of correctly ordered pairs among all pairs with different
/// labels, counting tied scores as half correct. Equals ROC AUC for binary
/// labels. Runs in O(n log n).
pub fn pairwise_ranking_score<L: Ord + Copy>(scores: &[f64], labels: &[L]) -> Result<f64, EvalError> {
    check_inputs(scores, labels)?;
    let distinct: Vec<L> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if distinct.len() < 2 {
        return Err(EvalError::DegenerateLabels);
    }
    let rank: Vec<usize> = labels.iter().map(|l| distinct.binary_search(l).expect("present")).collect();
    let n = scores.len() as u64;
    let mut per_label = vec![0u64; distinct.len()];
    for &r in &rank {
        per_label[r] += 1;
    }
    let total = (n * n - per_label.iter().map(|c| c * c).sum::<u64>()) / 2;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut seen = Fenwick(vec![0; distinct.len() + 1]);
    let mut correct = 0u64;
    let mut tied = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
        for &k in group {
            // strictly lower score and strictly lower label
            correct += seen.prefix(rank[k]);
            *counts.entry(rank[k]).or_default() += 1;
        }
        let g = group.len() as u64;
        tied += (g * g - counts.values().map(|c| c * c).sum::<u64>()) / 2;
        for (&r, &c) in &counts {
            seen.add(r, c);
        }
        i = j;
    }
    let incorrect = total - correct - tied;
    Ok(score_from_penalty(incorrect as f64 + 0.5 * tied as f64, total))
}

/// ROC AUC through the Mann-Whitney U statistic with average ranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|l| **l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateLabels);
    }
    let ranks = crate::stats::average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    let total = n_pos * n_neg;
    Ok(score_from_penalty(total as f64 - u, total))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DirectionCounts {
    /// Instances with a score.
    pub instances: usize,
    /// Instances whose score was missing.
    pub missing: usize,
    /// Scored instances per label level.
    pub labels: BTreeMap<u8, usize>,
}

/// A detector's metric on one task, per direction and averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: TaskId,
    pub detector: String,
    pub scores: BTreeMap<Direction, f64>,
    pub mean: f64,
    pub counts: BTreeMap<Direction, DirectionCounts>,
    /// Directions left out of the mean because fewer than two label
    /// values were present.
    pub excluded: Vec<Direction>,
}

/// Evaluates `(direction, score, label)` triples per direction. Missing
/// scores are counted and skipped.
pub fn evaluate_instances(
    task: TaskId,
    detector: &str,
    items: impl IntoIterator<Item = (Direction, Option<f64>, u8)>,
) -> Result<EvalResult, EvalError> {
    let mut groups: BTreeMap<Direction, (Vec<f64>, Vec<u8>, usize)> = BTreeMap::new();
    for (d, score, label) in items {
        let g = groups.entry(d).or_default();
        match score {
            Some(s) => {
                g.0.push(s);
                g.1.push(label);
            }
            None => g.2 += 1,
        }
    }
    let mut result = EvalResult {
        task,
        detector: detector.into(),
        scores: BTreeMap::new(),
        mean: f64::NAN,
        counts: BTreeMap::new(),
        excluded: Vec::new(),
    };
    for (d, (scores, labels, missing)) in groups {
        let mut counts = DirectionCounts { instances: scores.len(), missing, labels: BTreeMap::new() };
        for l in &labels {
            *counts.labels.entry(*l).or_default() += 1;
        }
        match pairwise_ranking_score(&scores, &labels) {
            Ok(v) => {
                result.scores.insert(d.clone(), v);
            }
            Err(EvalError::DegenerateLabels) => result.excluded.push(d.clone()),
            Err(e) => return Err(e),
        }
        result.counts.insert(d, counts);
    }
    if result.scores.is_empty() {
        return Err(EvalError::NoEvaluableDirections(format!("{detector} on {task}")));
    }
    result.mean = result.scores.values().sum::<f64>() / result.scores.len() as f64;
    Ok(result)
}

/// Evaluates one detector column of a sentence-level score table.
pub fn evaluate(c: &Corpus, table: &ScoreTable, detector: &str, task: TaskId) -> Result<EvalResult, EvalError> {
    let values = table.values_by_id(detector).ok_or_else(|| EvalError::UnknownDetector(detector.into()))?;
    let items = build_sentence_task(c, task)
        .into_iter()
        .map(|inst| (inst.direction, values.get(inst.id.as_str()).copied(), inst.label.level()));
    evaluate_instances(task, detector, items)
}

/// Evaluates word-level scores aligned with `rows`.
pub fn evaluate_words(
    rows: &[WordRow],
    scores: &[Option<f64>],
    task: TaskId,
    detector: &str,
) -> Result<EvalResult, EvalError> {
    if rows.len() != scores.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: rows.len() });
    }
    let items = rows.iter().zip(scores).filter_map(|(r, s)| r.gold.map(|g| (r.direction.clone(), *s, u8::from(g))));
    evaluate_instances(task, detector, items)
}

/// Results of several detectors on one task, laid out as a matrix with
/// directions as rows plus a final mean row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    pub task: TaskId,
    pub results: Vec<EvalResult>,
}

impl EvalMatrix {
    pub fn directions(&self) -> Vec<Direction> {
        let set: BTreeSet<&Direction> = self.results.iter().flat_map(|r| r.counts.keys()).collect();
        set.into_iter().cloned().collect()
    }

    /// `task,direction,<detector...>` with one row per direction and a
    /// `mean` row; excluded cells are empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TableError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["task".to_string(), "direction".to_string()];
        header.extend(self.results.iter().map(|r| r.detector.clone()));
        out.write_record(&header)?;
        for d in self.directions() {
            let mut row = vec![self.task.to_string(), d.to_string()];
            row.extend(self.results.iter().map(|r| r.scores.get(&d).map(|v| fmt_f64(*v)).unwrap_or_default()));
            out.write_record(&row)?;
        }
        let mut row = vec![self.task.to_string(), "mean".to_string()];
        row.extend(self.results.iter().map(|r| fmt_f64(r.mean)));
        out.write_record(&row)?;
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// One cell of an evaluation matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub task: String,
    pub direction: String,
    pub detector: String,
    pub score: Option<f64>,
}

/// Reads an evaluation matrix CSV back into long-format cells.
pub fn read_eval_csv<R: Read>(r: R) -> Result<Vec<EvalCell>, TableError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "task" || &headers[1] != "direction" {
        return Err(TableError::Format("expected leading columns task,direction".into()));
    }
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        for (j, det) in headers.iter().enumerate().skip(2) {
            let raw = rec.get(j).unwrap_or("");
            let score = if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|_| TableError::Format(format!("bad score {raw:?}")))?)
            };
            cells.push(EvalCell {
                task: rec[0].to_string(),
                direction: rec[1].to_string(),
                detector: det.to_string(),
                score,
            });
        }
    }
    Ok(cells)
}

/// Equalizes two corpora per stratum of (pathology level, data source,
/// direction): each stratum keeps `min(|a_s|, |b_s|)` records from both,
/// drawn without replacement. Outputs keep the original record order.
pub fn matched_downsample(a: &Corpus, b: &Corpus, seed: u64) -> (Corpus, Corpus) {
    type Key = (u8, String, Direction);
    fn strata(c: &Corpus) -> BTreeMap<Key, Vec<usize>> {
        let mut m: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
        for (i, r) in c.records().iter().enumerate() {
            if let Some(ann) = r.usable_annotation() {
                m.entry((ann.pathology().level(), r.data_source.clone(), r.direction.clone())).or_default().push(i);
            }
        }
        m
    }
    let sa = strata(a);
    let sb = strata(b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep_a = Vec::new();
    let mut keep_b = Vec::new();
    for (key, ia) in &sa {
        let Some(ib) = sb.get(key) else { continue };
        let m = ia.len().min(ib.len());
        keep_a.extend(rand::seq::index::sample(&mut rng, ia.len(), m).into_iter().map(|k| ia[k]));
        keep_b.extend(rand::seq::index::sample(&mut rng, ib.len(), m).into_iter().map(|k| ib[k]));
    }
    keep_a.sort_unstable();
    keep_b.sort_unstable();
    let pick = |c: &Corpus, idx: &[usize]| {
        Corpus::new(idx.iter().map(|&i| c.records()[i].clone()).collect()).expect("subset of a unique-id corpus")
    };
    (pick(a, &keep_a), pick(b, &keep_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Annotation;
    use crate::sentence::tests::bare_record;

    #[test]
    fn ranking_examples() {
        assert_eq!(pairwise_ranking_score(&[0.1, 0.2, 0.3], &[0u8, 1, 2]).unwrap(), 1.0);
        assert_eq!(pairwise_ranking_score(&[0.3, 0.2, 0.1], &[0u8, 1, 2]).unwrap(), 0.0);
        assert_eq!(pairwise_ranking_score(&[0.1, 0.4, 0.35, 0.8], &[0u8, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(pairwise_ranking_score(&[1.0, 1.0], &[0u8, 1]).unwrap(), 0.5);
        assert_eq!(pairwise_ranking_score(&[1.0, 2.0], &[1u8, 1]), Err(EvalError::DegenerateLabels));
        assert!(matches!(pairwise_ranking_score(&[1.0], &[1u8, 0]), Err(EvalError::LengthMismatch { .. })));
        assert_eq!(pairwise_ranking_score(&[f64::NAN, 1.0], &[0u8, 1]), Err(EvalError::NonFiniteScore(0)));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), Err(EvalError::DegenerateLabels));
    }

    fn annotated(id: &str, dir: &str, h: Severity, o: Severity) -> TranslationRecord {
        let mut r = bare_record(2, 2);
        r.id = id.into();
        r.direction = dir.parse().unwrap();
        r.annotation = Some(Annotation { halluc_severity: h, omission_severity: o, ..Default::default() });
        r
    }

    #[test]
    fn task_labels() {
        let c = Corpus::new(vec![
            annotated("a", "eng_Latn-deu_Latn", Severity::Partial, Severity::Full),
            annotated("b", "eng_Latn-deu_Latn", Severity::Word, Severity::None),
            annotated("c", "eng_Latn-deu_Latn", Severity::None, Severity::Partial),
        ])
        .unwrap();
        let path = build_sentence_task(&c, TaskId::SentPathology);
        assert_eq!(path[0].label, Severity::Full);
        let om = build_sentence_task(&c, TaskId::SentOmission);
        assert_eq!(om.len(), 1);
        assert_eq!((om[0].id.as_str(), om[0].label.level()), ("c", 2));
        assert_eq!(build_sentence_task(&c, TaskId::SentHalluc).len(), 3);
    }

    #[test]
    fn one_class_direction_is_excluded() {
        let d1: Direction = "eng_Latn-deu_Latn".parse().unwrap();
        let d2: Direction = "deu_Latn-eng_Latn".parse().unwrap();
        let items = vec![
            (d1.clone(), Some(0.1), 0),
            (d1.clone(), Some(0.9), 1),
            (d1.clone(), None, 1),
            (d2.clone(), Some(0.3), 0),
            (d2.clone(), Some(0.4), 0),
        ];
        let res = evaluate_instances(TaskId::SentHalluc, "x", items).unwrap();
        assert_eq!(res.excluded, vec![d2]);
        assert_eq!(res.mean, 1.0);
        assert_eq!(res.counts[&d1].missing, 1);
        assert!(matches!(
            evaluate_instances(TaskId::SentHalluc, "x", vec![(d1, Some(0.2), 0)]),
            Err(EvalError::NoEvaluableDirections(_))
        ));
    }

    #[test]
    fn task_names() {
        for t in TaskId::ALL {
            assert_eq!(t.name().parse::<TaskId>().unwrap(), t);
        }
        assert!("sent".parse::<TaskId>().is_err());
    }

    #[test]
    fn downsample_takes_stratum_minimum() {
        let mk = |prefix: &str, n: usize| {
            Corpus::new(
                (0..n)
                    .map(|i| annotated(&format!("{prefix}{i}"), "eng_Latn-deu_Latn", Severity::None, Severity::None))
                    .collect(),
            )
            .unwrap()
        };
        let (a, b) = matched_downsample(&mk("a", 5), &mk("b", 3), 11);
        assert_eq!((a.len(), b.len()), (3, 3));
        let (a2, _) = matched_downsample(&mk("a", 5), &mk("b", 3), 11);
        assert_eq!(a, a2);

        let other = Corpus::new(vec![annotated("z", "deu_Latn-eng_Latn", Severity::None, Severity::None)]).unwrap();
        let (a, b) = matched_downsample(&mk("a", 5), &other, 0);
        assert!(a.is_empty() && b.is_empty());
    }
}
