//! Attention-distribution anomaly scores based on Wasserstein distances:
//! distance to the uniform distribution, distance to a reference set of
//! attention maps from good translations, and two calibrated combinations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{AttentionDistribution, Corpus, Direction, TranslationRecord};
use crate::sentence::{self, DetectorError, DetectorId, DetectorScore, OtKind};
use crate::stats;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OtError {
    #[error("no reference distributions survive filtering for {0}")]
    EmptyReferenceSet(Direction),
    #[error("insufficient calibration data for {direction}: {got} records with attention, need at least {needed}")]
    InsufficientCalibrationData { direction: Direction, got: usize, needed: usize },
    #[error("degenerate calibration for {0}")]
    DegenerateCalibration(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// Minimum number of calibration records per direction.
pub const MIN_CALIBRATION_RECORDS: usize = 10;

/// EOS mass at or above this leaves nothing to renormalize.
const EOS_DEGENERATE: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtParams {
    /// Number of smallest reference distances averaged by Wass-to-Data.
    pub k: usize,
    /// Largest allowed source-length ratio between query and reference.
    pub window: f64,
    /// Quantile of calibration Wass-to-Unif scores used as the switch
    /// threshold of Wass-Combo.
    pub tau_quantile: f64,
}

impl Default for OtParams {
    fn default() -> Self {
        Self { k: 4, window: 1.25, tau_quantile: 0.99 }
    }
}

fn renormalized(mass: Vec<f64>, has_eos: bool) -> Result<AttentionDistribution, DetectorError> {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(DetectorError::DegenerateMass(format!("total mass {total}")));
    }
    Ok(AttentionDistribution::new(mass.into_iter().map(|m| m / total).collect(), has_eos))
}

/// The record's attention distribution, renormalized to sum to one. With
/// `drop_eos` the EOS position is removed before renormalizing.
pub fn attention_distribution(r: &TranslationRecord, drop_eos: bool) -> Result<AttentionDistribution, DetectorError> {
    let attn = r.attn.as_ref().filter(|a| !a.is_empty()).ok_or_else(|| DetectorError::MissingInput("attn".into()))?;
    if !drop_eos {
        return renormalized(attn.mass.clone(), attn.has_eos);
    }
    if !attn.has_eos {
        return Err(DetectorError::MissingInput("attn EOS position".into()));
    }
    let total = attn.total();
    let (eos, rest) = attn.mass.split_last().expect("non-empty");
    if total <= 0.0 || eos / total >= EOS_DEGENERATE || rest.is_empty() {
        return Err(DetectorError::DegenerateMass(format!(
            "EOS holds {:.6} of the attention mass",
            if total > 0.0 { eos / total } else { 1.0 }
        )));
    }
    renormalized(rest.to_vec(), false)
}

/// Wasserstein distance to the uniform distribution under 0/1 cost, which is
/// the total-variation distance `0.5 * sum |d_j - 1/n|`. Summed as the
/// positive excess `sum max(n d_j - 1, 0) / n`, which is equal for unit
/// mass and exact on one-hot and uniform inputs.
pub fn wass_to_unif(d: &AttentionDistribution) -> f64 {
    let n = d.len() as f64;
    d.mass.iter().map(|m| (m * n - 1.0).max(0.0)).sum::<f64>() / n
}

/// Support point of position `j` in a distribution of length `n`.
pub fn position(j: usize, n: usize) -> f64 {
    (j as f64 + 0.5) / n as f64
}

/// 1-Wasserstein distance between two attention distributions placed on
/// [0, 1] at positions `(j + 0.5) / len`, computed exactly as the integral
/// of the absolute CDF difference over the merged breakpoints.
pub fn wass1_positions(a: &AttentionDistribution, b: &AttentionDistribution) -> f64 {
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(a.len() + b.len());
    events.extend(a.mass.iter().enumerate().map(|(j, &m)| (position(j, a.len()), m)));
    events.extend(b.mass.iter().enumerate().map(|(k, &m)| (position(k, b.len()), -m)));
    events.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut cdf_diff = 0.0;
    let mut dist = 0.0;
    for w in events.windows(2) {
        cdf_diff += w[0].1;
        dist += cdf_diff.abs() * (w[1].0 - w[0].0);
    }
    dist
}

/// Which signals are used to discard doubtful reference translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFilter {
    /// Fraction of records dropped per criterion.
    pub drop_fraction: f64,
    pub length_ratio: bool,
    pub seq_logprob: bool,
    /// Similarity encoder; `None` disables, `Some("auto")` picks the first
    /// encoder (by name) shared by every candidate.
    pub similarity: Option<String>,
}

impl Default for ReferenceFilter {
    fn default() -> Self {
        Self { drop_fraction: 0.2, length_ratio: true, seq_logprob: true, similarity: Some("auto".into()) }
    }
}

/// Attention distributions of presumably good translations in one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub direction: Direction,
    pub drop_eos: bool,
    pub ids: Vec<String>,
    pub distributions: Vec<AttentionDistribution>,
    pub source_lengths: Vec<usize>,
}

impl ReferenceSet {
    pub fn len(&self) -> usize {
        self.distributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distributions.is_empty()
    }
}

fn length_ratio(r: &TranslationRecord) -> f64 {
    let (a, b) = (r.src_tokens.len(), r.tgt_tokens.len());
    if a.max(b) == 0 {
        0.0
    } else {
        a.min(b) as f64 / a.max(b) as f64
    }
}

/// Indices of the worst `ceil(fraction * n)` records by `badness`, ties
/// broken by ascending record id.
fn worst_indices(ids: &[&str], badness: &[f64], fraction: f64) -> Vec<usize> {
    let n = ids.len();
    let n_drop = ((n as f64 * fraction) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| badness[y].total_cmp(&badness[x]).then_with(|| ids[x].cmp(ids[y])));
    order.truncate(n_drop.min(n));
    order
}

fn shared_encoder(records: &[&TranslationRecord]) -> Option<String> {
    let first = records.first()?.embeddings.as_ref()?;
    first.keys().find(|k| records.iter().all(|r| r.embeddings.as_ref().is_some_and(|m| m.contains_key(*k)))).cloned()
}

fn build_one(
    direction: &Direction,
    records: &[&TranslationRecord],
    drop_eos: bool,
    filter: &ReferenceFilter,
) -> Result<ReferenceSet, OtError> {
    let mut cands: Vec<(&TranslationRecord, AttentionDistribution)> =
        records.iter().filter_map(|r| attention_distribution(r, drop_eos).ok().map(|d| (*r, d))).collect();
    cands.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    let ids: Vec<&str> = cands.iter().map(|(r, _)| r.id.as_str()).collect();
    let recs: Vec<&TranslationRecord> = cands.iter().map(|(r, _)| *r).collect();

    let mut criteria: Vec<Vec<f64>> = Vec::new();
    if filter.length_ratio {
        criteria.push(recs.iter().map(|r| -length_ratio(r)).collect());
    }
    if filter.seq_logprob {
        let scores: Option<Vec<f64>> = recs.iter().map(|r| sentence::seq_logprob(r).ok().map(|s| s.value)).collect();
        criteria.extend(scores);
    }
    if let Some(enc) = &filter.similarity {
        let enc = if enc == "auto" { shared_encoder(&recs) } else { Some(enc.clone()) };
        if let Some(enc) = enc {
            let scores: Option<Vec<f64>> =
                recs.iter().map(|r| sentence::embedding_similarity(r, &enc).ok().map(|s| s.value)).collect();
            criteria.extend(scores);
        }
    }

    let mut dropped = vec![false; cands.len()];
    for badness in &criteria {
        for i in worst_indices(&ids, badness, filter.drop_fraction) {
            dropped[i] = true;
        }
    }
    let mut set = ReferenceSet {
        direction: direction.clone(),
        drop_eos,
        ids: Vec::new(),
        distributions: Vec::new(),
        source_lengths: Vec::new(),
    };
    for ((r, d), gone) in cands.into_iter().zip(dropped) {
        if !gone {
            set.ids.push(r.id.clone());
            set.source_lengths.push(d.source_len());
            set.distributions.push(d);
        }
    }
    if set.is_empty() {
        return Err(OtError::EmptyReferenceSet(direction.clone()));
    }
    Ok(set)
}

/// Per-direction reference sets: records with attention, minus the worst
/// `drop_fraction` under each available filtering criterion.
pub fn build_reference_set(
    c: &Corpus,
    drop_eos: bool,
    filter: &ReferenceFilter,
) -> Result<BTreeMap<Direction, ReferenceSet>, OtError> {
    let mut by_dir: BTreeMap<Direction, Vec<&TranslationRecord>> = BTreeMap::new();
    for r in c.records() {
        by_dir.entry(r.direction.clone()).or_default().push(r);
    }
    by_dir.iter().map(|(d, recs)| Ok((d.clone(), build_one(d, recs, drop_eos, filter)?))).collect()
}

fn within_window(a: usize, b: usize, window: f64) -> bool {
    let (lo, hi) = (a.min(b), a.max(b));
    if lo == 0 {
        return hi == 0;
    }
    hi as f64 / lo as f64 <= window
}

/// Mean of the `k` smallest distances from `d` to references of similar
/// source length; falls back to the whole set when fewer than `k` are
/// within the length window.
pub fn wass_to_data(d: &AttentionDistribution, reference: &ReferenceSet, params: &OtParams) -> f64 {
    let n = d.source_len();
    let mut dists: Vec<f64> = reference
        .distributions
        .iter()
        .zip(&reference.source_lengths)
        .filter(|(_, &l)| within_window(l, n, params.window))
        .map(|(r, _)| wass1_positions(d, r))
        .collect();
    if dists.len() < params.k {
        dists = reference.distributions.iter().map(|r| wass1_positions(d, r)).collect();
    }
    dists.sort_by(f64::total_cmp);
    let take = params.k.max(1).min(dists.len());
    dists[..take].iter().sum::<f64>() / take as f64
}

/// Quantiles and spreads of raw scores on held-out data, fixing how
/// Wass-to-Unif is rescaled and combined with Wass-to-Data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub direction: Direction,
    pub drop_eos: bool,
    pub q1_wtu: f64,
    pub q99_wtu: f64,
    pub q1_wtd: f64,
    pub q99_wtd: f64,
    pub sd_wtu: f64,
    pub sd_wtd: f64,
    pub tau: f64,
    pub params: OtParams,
    pub n_records: usize,
}

impl Calibration {
    /// Affine map sending `(q1_wtu, q99_wtu)` onto `(q1_wtd, q99_wtd)`.
    pub fn scale_wtu(&self, wtu: f64) -> Result<f64, DetectorError> {
        let span = self.q99_wtu - self.q1_wtu;
        if !(span > 0.0) {
            return Err(DetectorError::DegenerateCalibration(format!("{}: q99_wtu equals q1_wtu", self.direction)));
        }
        let t = (wtu - self.q1_wtu) / span;
        Ok((1.0 - t) * self.q1_wtd + t * self.q99_wtd)
    }

    /// Weights of Wass-to-Unif and Wass-to-Data, inversely proportional to
    /// their standard deviations.
    pub fn mean_weights(&self) -> Result<(f64, f64), DetectorError> {
        if !(self.sd_wtu > 0.0 && self.sd_wtd > 0.0) {
            return Err(DetectorError::DegenerateCalibration(format!(
                "{}: non-positive standard deviation",
                self.direction
            )));
        }
        let (iu, id) = (1.0 / self.sd_wtu, 1.0 / self.sd_wtd);
        let w_u = iu / (iu + id);
        Ok((w_u, 1.0 - w_u))
    }
}

/// Raw Wass-to-Unif and Wass-to-Data of one distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawOtScores {
    pub wtu: f64,
    pub wtd: f64,
}

pub fn raw_scores(d: &AttentionDistribution, reference: &ReferenceSet, params: &OtParams) -> RawOtScores {
    RawOtScores { wtu: wass_to_unif(d), wtd: wass_to_data(d, reference, params) }
}

/// Calibrates one direction on held-out records (which should not belong
/// to the reference set).
pub fn calibrate<'a>(
    records: impl IntoIterator<Item = &'a TranslationRecord>,
    reference: &ReferenceSet,
    params: &OtParams,
) -> Result<Calibration, OtError> {
    let direction = reference.direction.clone();
    let mut wtu = Vec::new();
    let mut wtd = Vec::new();
    for r in records {
        if r.direction != direction {
            continue;
        }
        let Ok(d) = attention_distribution(r, reference.drop_eos) else { continue };
        let s = raw_scores(&d, reference, params);
        wtu.push(s.wtu);
        wtd.push(s.wtd);
    }
    if wtu.len() < MIN_CALIBRATION_RECORDS {
        return Err(OtError::InsufficientCalibrationData {
            direction,
            got: wtu.len(),
            needed: MIN_CALIBRATION_RECORDS,
        });
    }
    calibration_from_scores(direction, reference.drop_eos, &wtu, &wtd, params)
}

/// Builds a calibration from raw score samples.
pub fn calibration_from_scores(
    direction: Direction,
    drop_eos: bool,
    wtu: &[f64],
    wtd: &[f64],
    params: &OtParams,
) -> Result<Calibration, OtError> {
    let mut su = wtu.to_vec();
    let mut sd = wtd.to_vec();
    su.sort_by(f64::total_cmp);
    sd.sort_by(f64::total_cmp);
    let cal = Calibration {
        q1_wtu: stats::quantile_sorted(&su, 0.01),
        q99_wtu: stats::quantile_sorted(&su, 0.99),
        q1_wtd: stats::quantile_sorted(&sd, 0.01),
        q99_wtd: stats::quantile_sorted(&sd, 0.99),
        sd_wtu: stats::std_dev(wtu),
        sd_wtd: stats::std_dev(wtd),
        tau: stats::quantile_sorted(&su, params.tau_quantile),
        params: params.clone(),
        n_records: wtu.len(),
        direction,
        drop_eos,
    };
    if !(cal.sd_wtu > 0.0 && cal.sd_wtd > 0.0) {
        return Err(OtError::DegenerateCalibration(format!(
            "{}: zero variance (sd_wtu = {}, sd_wtd = {})",
            cal.direction, cal.sd_wtu, cal.sd_wtd
        )));
    }
    if cal.q99_wtu <= cal.q1_wtu {
        return Err(OtError::DegenerateCalibration(format!("{}: q99_wtu equals q1_wtu", cal.direction)));
    }
    Ok(cal)
}

/// Wass-Combo from raw scores: the rescaled Wass-to-Unif when it exceeds the
/// threshold, Wass-to-Data otherwise.
pub fn combo_from_raw(raw: RawOtScores, cal: &Calibration) -> Result<f64, DetectorError> {
    let scaled = cal.scale_wtu(raw.wtu)?;
    Ok(if raw.wtu > cal.tau { scaled } else { raw.wtd })
}

pub fn mean_from_raw(raw: RawOtScores, cal: &Calibration) -> Result<f64, DetectorError> {
    let (w_u, w_d) = cal.mean_weights()?;
    Ok(w_u * raw.wtu + w_d * raw.wtd)
}

pub fn wass_combo(
    d: &AttentionDistribution,
    reference: &ReferenceSet,
    cal: &Calibration,
) -> Result<DetectorScore, DetectorError> {
    let v = combo_from_raw(raw_scores(d, reference, &cal.params), cal)?;
    Ok(DetectorScore::new(DetectorId::Ot { kind: OtKind::WassCombo, drop_eos: cal.drop_eos }, v))
}

pub fn wass_mean(
    d: &AttentionDistribution,
    reference: &ReferenceSet,
    cal: &Calibration,
) -> Result<DetectorScore, DetectorError> {
    let v = mean_from_raw(raw_scores(d, reference, &cal.params), cal)?;
    Ok(DetectorScore::new(DetectorId::Ot { kind: OtKind::WassMean, drop_eos: cal.drop_eos }, v))
}

/// Reference sets and calibrations for every (direction, EOS policy) in use.
#[derive(Debug, Clone, Default)]
pub struct OtContext {
    pub params: OtParams,
    pub references: BTreeMap<(Direction, bool), ReferenceSet>,
    pub calibrations: BTreeMap<(Direction, bool), Calibration>,
}

impl OtContext {
    pub fn new(params: OtParams) -> Self {
        Self { params, ..Self::default() }
    }

    pub fn add_references(&mut self, sets: BTreeMap<Direction, ReferenceSet>) {
        for (d, s) in sets {
            self.references.insert((d, s.drop_eos), s);
        }
    }

    pub fn add_calibration(&mut self, cal: Calibration) {
        self.calibrations.insert((cal.direction.clone(), cal.drop_eos), cal);
    }

    /// Calibrates every reference set on the held-out corpus.
    pub fn calibrate_on(&mut self, held_out: &Corpus) -> Result<(), OtError> {
        let cals = self
            .references
            .values()
            .map(|set| calibrate(held_out.records(), set, &self.params))
            .collect::<Result<Vec<_>, _>>()?;
        for c in cals {
            self.add_calibration(c);
        }
        Ok(())
    }

    fn reference(&self, r: &TranslationRecord, drop_eos: bool) -> Result<&ReferenceSet, DetectorError> {
        self.references
            .get(&(r.direction.clone(), drop_eos))
            .ok_or_else(|| DetectorError::MissingContext(format!("reference set {}{}", r.direction, eos_tag(drop_eos))))
    }

    fn calibration(&self, r: &TranslationRecord, drop_eos: bool) -> Result<&Calibration, DetectorError> {
        self.calibrations
            .get(&(r.direction.clone(), drop_eos))
            .ok_or_else(|| DetectorError::MissingContext(format!("calibration {}{}", r.direction, eos_tag(drop_eos))))
    }

    /// Scores one record with one member of the OT family.
    pub fn score(&self, r: &TranslationRecord, kind: OtKind, drop_eos: bool) -> Result<DetectorScore, DetectorError> {
        let id = DetectorId::Ot { kind, drop_eos };
        let d = attention_distribution(r, drop_eos)?;
        let value = match kind {
            OtKind::WassToUnif => wass_to_unif(&d),
            OtKind::WassToData => wass_to_data(&d, self.reference(r, drop_eos)?, &self.params),
            OtKind::WassCombo => {
                let cal = self.calibration(r, drop_eos)?;
                combo_from_raw(raw_scores(&d, self.reference(r, drop_eos)?, &cal.params), cal)?
            }
            OtKind::WassMean => {
                let cal = self.calibration(r, drop_eos)?;
                mean_from_raw(raw_scores(&d, self.reference(r, drop_eos)?, &cal.params), cal)?
            }
        };
        Ok(DetectorScore::new(id, value))
    }
}

fn eos_tag(drop_eos: bool) -> &'static str {
    if drop_eos {
        " (EOS dropped)"
    } else {
        ""
    }
}

/// Calibrations persisted as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBundle {
    pub calibrations: Vec<Calibration>,
}

impl CalibrationBundle {
    pub fn from_context(ctx: &OtContext) -> Self {
        Self { calibrations: ctx.calibrations.values().cloned().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentence::tests::bare_record;

    fn dist(mass: &[f64]) -> AttentionDistribution {
        AttentionDistribution::new(mass.to_vec(), false)
    }

    #[test]
    fn dropping_eos_renormalizes() {
        let mut r = bare_record(2, 1);
        r.attn = Some(AttentionDistribution::new(vec![0.2, 0.05, 0.75], true));
        let d = attention_distribution(&r, true).unwrap();
        assert!(!d.has_eos);
        assert!((d.mass[0] - 0.8).abs() < 1e-12 && (d.mass[1] - 0.2).abs() < 1e-12);
        assert!((d.total() - 1.0).abs() <= 1e-12);

        let kept = attention_distribution(&r, false).unwrap();
        assert!(kept.has_eos);
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn pass_through_without_eos() {
        let mut r = bare_record(2, 1);
        r.attn = Some(AttentionDistribution::new(vec![0.5, 0.5], false));
        assert_eq!(attention_distribution(&r, false).unwrap().mass, vec![0.5, 0.5]);
        assert!(matches!(attention_distribution(&r, true), Err(DetectorError::MissingInput(_))));
    }

    #[test]
    fn all_mass_on_eos_is_degenerate() {
        let mut r = bare_record(2, 1);
        r.attn = Some(AttentionDistribution::new(vec![0.0, 0.0, 1.0], true));
        assert!(matches!(attention_distribution(&r, true), Err(DetectorError::DegenerateMass(_))));
        assert!(matches!(attention_distribution(&bare_record(2, 1), true), Err(DetectorError::MissingInput(_))));
    }

    #[test]
    fn wass_to_unif_examples() {
        for n in 1..8 {
            assert_eq!(wass_to_unif(&dist(&vec![1.0 / n as f64; n])), 0.0);
        }
        assert_eq!(wass_to_unif(&dist(&[1.0, 0.0, 0.0, 0.0])), 0.75);
        assert_eq!(wass_to_unif(&dist(&[0.5, 0.5, 0.0, 0.0])), 0.5);
    }

    #[test]
    fn wass1_examples() {
        // point masses at 0.25 and 0.75
        let a = dist(&[1.0, 0.0]);
        let b = dist(&[0.0, 1.0]);
        assert!((wass1_positions(&a, &b) - 0.5).abs() < 1e-15);
        assert_eq!(wass1_positions(&a, &a), 0.0);
        assert!((wass1_positions(&dist(&[1.0]), &dist(&[0.5, 0.5])) - 0.25).abs() < 1e-15);
        // merged equal positions: [1] at 0.5 vs [0,1,0] at 0.5
        assert_eq!(wass1_positions(&dist(&[1.0]), &dist(&[0.0, 1.0, 0.0])), 0.0);
    }

    fn reference(dists: Vec<AttentionDistribution>) -> ReferenceSet {
        ReferenceSet {
            direction: crate::model::parse_direction("eng_Latn-deu_Latn").unwrap(),
            drop_eos: false,
            ids: (0..dists.len()).map(|i| format!("ref{i}")).collect(),
            source_lengths: dists.iter().map(AttentionDistribution::source_len).collect(),
            distributions: dists,
        }
    }

    #[test]
    fn wass_to_data_examples() {
        let set = reference(vec![dist(&[0.3, 0.7]), dist(&[0.9, 0.1])]);
        let p = OtParams { k: 1, ..OtParams::default() };
        assert_eq!(wass_to_data(&dist(&[0.3, 0.7]), &set, &p), 0.0);

        let set = reference(vec![dist(&[1.0, 0.0])]);
        assert!((wass_to_data(&dist(&[0.0, 1.0]), &set, &p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wass_to_data_length_window_and_fallback() {
        // only the 2-long reference is within the window of a 2-long query
        let set = reference(vec![dist(&[0.5, 0.5]), dist(&[0.25; 4]), dist(&[0.125; 8])]);
        let q = dist(&[0.0, 1.0]);
        let p = OtParams { k: 1, ..OtParams::default() };
        assert!((wass_to_data(&q, &set, &p) - wass1_positions(&q, &set.distributions[0])).abs() < 1e-15);
        // k = 2 exceeds the in-window count, so all references are used
        let p2 = OtParams { k: 2, ..OtParams::default() };
        let mut all: Vec<f64> = set.distributions.iter().map(|r| wass1_positions(&q, r)).collect();
        all.sort_by(f64::total_cmp);
        assert!((wass_to_data(&q, &set, &p2) - (all[0] + all[1]) / 2.0).abs() < 1e-15);
    }

    fn cal(q1u: f64, q99u: f64, q1d: f64, q99d: f64, tau: f64) -> Calibration {
        Calibration {
            direction: crate::model::parse_direction("eng_Latn-deu_Latn").unwrap(),
            drop_eos: false,
            q1_wtu: q1u,
            q99_wtu: q99u,
            q1_wtd: q1d,
            q99_wtd: q99d,
            sd_wtu: 1.0,
            sd_wtd: 1.0,
            tau,
            params: OtParams::default(),
            n_records: 100,
        }
    }

    #[test]
    fn combo_branches() {
        let c = cal(0.1, 0.6, 0.2, 0.4, 0.3);
        // below tau: raw wtd
        assert_eq!(combo_from_raw(RawOtScores { wtu: 0.1, wtd: 0.33 }, &c).unwrap(), 0.33);
        assert!((combo_from_raw(RawOtScores { wtu: 0.6, wtd: 0.0 }, &c).unwrap() - 0.4).abs() < 1e-12);
        assert!((combo_from_raw(RawOtScores { wtu: 0.35, wtd: 0.0 }, &c).unwrap() - 0.3).abs() < 1e-12);
        let flat = cal(0.2, 0.2, 0.1, 0.3, 0.0);
        assert!(matches!(
            combo_from_raw(RawOtScores { wtu: 0.5, wtd: 0.1 }, &flat),
            Err(DetectorError::DegenerateCalibration(_))
        ));
    }

    #[test]
    fn mean_weights_examples() {
        let mut c = cal(0.0, 1.0, 0.0, 1.0, 0.5);
        let raw = RawOtScores { wtu: 0.4, wtd: 0.8 };
        assert!((mean_from_raw(raw, &c).unwrap() - 0.6).abs() < 1e-15);
        c.sd_wtu = 1.0;
        c.sd_wtd = 3.0;
        let (wu, wd) = c.mean_weights().unwrap();
        assert!((wu - 0.75).abs() < 1e-15 && (wu + wd - 1.0).abs() < 1e-15);
        assert!((mean_from_raw(raw, &c).unwrap() - 0.5).abs() < 1e-15);
        c.sd_wtu = 1e12;
        assert!((mean_from_raw(raw, &c).unwrap() - 0.8).abs() < 1e-9);
        c.sd_wtu = 0.0;
        assert!(mean_from_raw(raw, &c).is_err());
    }

    #[test]
    fn constant_calibration_is_degenerate() {
        let d = crate::model::parse_direction("eng_Latn-deu_Latn").unwrap();
        let wtu = vec![0.1; 20];
        let wtd: Vec<f64> = (0..20).map(f64::from).collect();
        assert!(matches!(
            calibration_from_scores(d, false, &wtu, &wtd, &OtParams::default()),
            Err(OtError::DegenerateCalibration(_))
        ));
    }
}
