//! Deterministic synthetic trace corpora with planted hallucinations and
//! omissions.
//!
//! A record is built from translation units. Each source word is one unit
//! of 1-3 subword tokens; its translation keeps the token count. Omitted
//! source words get no translation, and hallucinated target words are
//! extra slots not tied to any source word. Every trace is drawn so that
//! pathological tokens look pathological, except for a configurable share
//! of misleading tokens per signal.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{
    AnnotatedSpan, Annotation, AttentionDistribution, ContributionMatrix, Corpus, Direction, EmbeddingPair, Severity,
    Side, TokenSpan, TranslationRecord,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid record spec: {0}")]
    InvalidSpec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Signal strengths. `*_flip` is the share of pathological words whose
/// signal is drawn from the clean distribution; `*_false_alarm` the share
/// of clean words drawn from the pathological one. Fully hallucinated
/// records are never flipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalParams {
    /// Mean row mass of clean tokens is `0.5 + 0.5 * clean_mass_mean`.
    pub clean_mass_mean: f64,
    pub halluc_mass_mean: f64,
    pub beta_concentration: f64,
    pub clean_logprob_mean: f64,
    pub halluc_logprob_mean: f64,
    pub clean_gap_mean: f64,
    pub halluc_gap_mean: f64,
    /// Source usage weight of omitted tokens (clean tokens use about 1).
    pub omitted_usage: f64,
    pub logprob_flip: f64,
    pub contrastive_flip: f64,
    pub alti_flip: f64,
    pub logprob_false_alarm: f64,
    pub contrastive_false_alarm: f64,
    pub alti_false_alarm: f64,
    /// Mean EOS attention mass of clean records.
    pub eos_mean: f64,
    /// Standard deviation of the noise on embeddings and external scores.
    pub noise_sd: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self {
            clean_mass_mean: 0.7,
            halluc_mass_mean: 0.1,
            beta_concentration: 10.0,
            clean_logprob_mean: 0.6,
            halluc_logprob_mean: 2.4,
            clean_gap_mean: 3.0,
            halluc_gap_mean: 0.2,
            omitted_usage: 0.05,
            logprob_flip: 0.2,
            contrastive_flip: 0.2,
            alti_flip: 0.3,
            logprob_false_alarm: 0.03,
            contrastive_false_alarm: 0.03,
            alti_false_alarm: 0.0,
            eos_mean: 0.15,
            noise_sd: 0.05,
        }
    }
}

impl SignalParams {
    fn validate(&self) -> Result<(), String> {
        let probs = [
            ("clean_mass_mean", self.clean_mass_mean),
            ("halluc_mass_mean", self.halluc_mass_mean),
            ("eos_mean", self.eos_mean),
        ];
        for (name, v) in probs {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("{name} must lie in (0, 1)"));
            }
        }
        let rates = [
            ("logprob_flip", self.logprob_flip),
            ("contrastive_flip", self.contrastive_flip),
            ("alti_flip", self.alti_flip),
            ("logprob_false_alarm", self.logprob_false_alarm),
            ("contrastive_false_alarm", self.contrastive_false_alarm),
            ("alti_false_alarm", self.alti_false_alarm),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        let positive = [
            ("beta_concentration", self.beta_concentration),
            ("clean_logprob_mean", self.clean_logprob_mean),
            ("halluc_logprob_mean", self.halluc_logprob_mean),
            ("clean_gap_mean", self.clean_gap_mean),
            ("halluc_gap_mean", self.halluc_gap_mean),
            ("omitted_usage", self.omitted_usage),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err("noise_sd must be non-negative".into());
        }
        Ok(())
    }
}

/// Everything needed to build one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSpec {
    pub id: String,
    pub direction: Direction,
    pub data_source: String,
    /// Character length of each source word (2-9). Han scripts use
    /// `ceil(len / 4)` characters instead.
    pub src_word_lengths: Vec<usize>,
    /// Omitted source-word ranges, sorted and disjoint.
    pub omitted: Vec<Range<usize>>,
    /// Number of target words before the final punctuation.
    pub tgt_len: usize,
    /// Hallucinated target-word ranges, sorted and disjoint.
    pub hallucinated: Vec<Range<usize>>,
    pub halluc_severity: Severity,
    pub omission_severity: Severity,
    pub signal: SignalParams,
    pub has_eos: bool,
    pub encoders: Vec<String>,
    pub externals: Vec<String>,
}

fn tokens_for_length(len: usize) -> usize {
    len.div_ceil(4)
}

fn check_ranges(what: &str, ranges: &[Range<usize>], n: usize) -> Result<(), SynthError> {
    let mut prev_end = 0;
    for r in ranges {
        if r.start >= r.end || r.end > n {
            return Err(SynthError::InvalidSpec(format!("{what} range {r:?} out of range for {n} words")));
        }
        if r.start < prev_end {
            return Err(SynthError::InvalidSpec(format!("{what} ranges overlap or are unsorted at {r:?}")));
        }
        prev_end = r.end;
    }
    Ok(())
}

fn in_ranges(ranges: &[Range<usize>], i: usize) -> bool {
    ranges.iter().any(|r| r.contains(&i))
}

impl RecordSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.src_word_lengths.is_empty() || self.tgt_len == 0 {
            return Err(SynthError::InvalidSpec("source and target need at least one word".into()));
        }
        if let Some(l) = self.src_word_lengths.iter().find(|l| !(2..=9).contains(*l)) {
            return Err(SynthError::InvalidSpec(format!("source word length {l} outside 2..=9")));
        }
        check_ranges("omitted", &self.omitted, self.src_word_lengths.len())?;
        check_ranges("hallucinated", &self.hallucinated, self.tgt_len)?;
        if (self.halluc_severity == Severity::None) != self.hallucinated.is_empty() {
            return Err(SynthError::InvalidSpec("hallucination severity and spans disagree".into()));
        }
        if (self.omission_severity == Severity::None) != self.omitted.is_empty() {
            return Err(SynthError::InvalidSpec("omission severity and spans disagree".into()));
        }
        let units = (0..self.src_word_lengths.len()).filter(|i| !in_ranges(&self.omitted, *i)).count();
        let slots = (0..self.tgt_len).filter(|i| !in_ranges(&self.hallucinated, *i)).count();
        if slots != 0 && slots != units {
            return Err(SynthError::InvalidSpec(format!(
                "{slots} non-hallucinated target slots for {units} translated source words"
            )));
        }
        self.signal.validate().map_err(SynthError::InvalidSpec)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Script {
    Latin,
    Cyrillic,
    Arabic,
    Han,
}

impl Script {
    fn of(code: &str) -> Self {
        match code {
            "Cyrl" => Script::Cyrillic,
            "Arab" => Script::Arabic,
            "Hans" | "Hant" | "Hani" => Script::Han,
            _ => Script::Latin,
        }
    }

    fn letter(self, rng: &mut ChaCha8Rng) -> char {
        let (lo, n) = match self {
            Script::Latin => ('a' as u32, 26),
            Script::Cyrillic => (0x0430, 32),
            Script::Arabic => (0x0628, 19),
            Script::Han => (0x4E00, 0x0800),
        };
        char::from_u32(lo + rng.random_range(0..n)).expect("letter ranges are valid")
    }

    fn stop(self) -> &'static str {
        if self == Script::Han {
            "。"
        } else {
            "."
        }
    }
}

/// A word with its subword token ranges, in characters relative to the word.
struct Word {
    text: String,
    pieces: Vec<Range<usize>>,
}

/// A word of `t` tokens: Han words are `t` single-character tokens,
/// others a run of letters cut into four-character pieces.
fn make_word(script: Script, t: usize, len_hint: Option<usize>, rng: &mut ChaCha8Rng) -> Word {
    if script == Script::Han {
        let text: String = (0..t).map(|_| script.letter(rng)).collect();
        return Word { text, pieces: (0..t).map(|k| k..k + 1).collect() };
    }
    let len = len_hint.unwrap_or_else(|| match t {
        1 => rng.random_range(2..=4),
        2 => rng.random_range(5..=8),
        _ => 9,
    });
    let text: String = (0..len).map(|_| script.letter(rng)).collect();
    let pieces = (0..len).step_by(4).map(|s| s..(s + 4).min(len)).collect();
    Word { text, pieces }
}

/// Renders words into text and tokens; returns per-word token ranges and
/// per-word character ranges.
fn render(words: &[Word], script: Script) -> (String, Vec<TokenSpan>, Vec<Range<usize>>, Vec<Range<usize>>) {
    let sep = if script == Script::Han { "" } else { " " };
    let mut text = String::new();
    let mut pos = 0;
    let mut tokens = Vec::new();
    let mut word_tokens = Vec::new();
    let mut word_chars = Vec::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push_str(sep);
            pos += sep.chars().count();
        }
        let first = tokens.len();
        let chars: Vec<char> = w.text.chars().collect();
        for p in &w.pieces {
            tokens.push(TokenSpan::new(chars[p.clone()].iter().collect::<String>(), pos + p.start, pos + p.end));
        }
        word_tokens.push(first..tokens.len());
        word_chars.push(pos..pos + chars.len());
        text.push_str(&w.text);
        pos += chars.len();
    }
    let stop = script.stop();
    tokens.push(TokenSpan::new(stop, pos, pos + 1));
    text.push_str(stop);
    (text, tokens, word_tokens, word_chars)
}

fn beta(rng: &mut ChaCha8Rng, mean: f64, concentration: f64) -> f64 {
    Beta::new(mean * concentration, (1.0 - mean) * concentration).expect("validated parameters").sample(rng)
}

/// Gamma draw with shape 4, so values stay positive with a moderate spread.
fn gamma_with_mean(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    Gamma::new(4.0, mean / 4.0).expect("validated parameters").sample(rng)
}

/// Per-word draw of whether each signal looks pathological.
#[derive(Clone, Copy)]
struct Looks {
    logprob: bool,
    contrastive: bool,
    alti: bool,
}

fn looks(rng: &mut ChaCha8Rng, bad: bool, no_flip: bool, s: &SignalParams) -> Looks {
    let mut draw = |flip: f64, alarm: f64| {
        if bad {
            no_flip || !rng.random_bool(flip)
        } else {
            rng.random_bool(alarm)
        }
    };
    Looks {
        logprob: draw(s.logprob_flip, s.logprob_false_alarm),
        contrastive: draw(s.contrastive_flip, s.contrastive_false_alarm),
        alti: draw(s.alti_flip, s.alti_false_alarm),
    }
}

/// Log-probability and its source-free counterpart for one token.
fn logprobs(rng: &mut ChaCha8Rng, l: Looks, s: &SignalParams) -> (f64, f64) {
    let lp = -gamma_with_mean(rng, if l.logprob { s.halluc_logprob_mean } else { s.clean_logprob_mean });
    let gap = gamma_with_mean(rng, if l.contrastive { s.halluc_gap_mean } else { s.clean_gap_mean });
    (lp, lp - gap)
}

fn noisy_unit_vector(rng: &mut ChaCha8Rng, base: &[f64], cos: f64) -> Vec<f64> {
    let noise: Vec<f64> = base.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let dot: f64 = noise.iter().zip(base).map(|(a, b)| a * b).sum();
    let mut ortho: Vec<f64> = noise.iter().zip(base).map(|(n, b)| n - dot * b).collect();
    let norm = ortho.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    ortho.iter_mut().for_each(|x| *x /= norm);
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    base.iter().zip(&ortho).map(|(b, o)| cos * b + sin * o).collect()
}

const EMBEDDING_DIM: usize = 16;

/// Builds a record from its spec. Identical `(spec, seed)` pairs give
/// identical records.
pub fn generate_record(spec: &RecordSpec, seed: u64) -> Result<TranslationRecord, SynthError> {
    spec.validate()?;
    let s = &spec.signal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src_script = Script::of(&spec.direction.src_script);
    let tgt_script = Script::of(&spec.direction.tgt_script);

    let src_words: Vec<Word> = spec
        .src_word_lengths
        .iter()
        .map(|&len| {
            let t = tokens_for_length(len);
            make_word(src_script, t, (src_script != Script::Han).then_some(len), &mut rng)
        })
        .collect();
    let units: Vec<usize> = (0..src_words.len()).filter(|i| !in_ranges(&spec.omitted, *i)).collect();

    // target slots: translations of kept source words, in order, or
    // hallucinated words
    let mut next_unit = units.iter();
    let mut tgt_words = Vec::with_capacity(spec.tgt_len);
    let mut tgt_source: Vec<Option<usize>> = Vec::with_capacity(spec.tgt_len);
    for i in 0..spec.tgt_len {
        if in_ranges(&spec.hallucinated, i) {
            let t = rng.random_range(1..=3);
            tgt_words.push(make_word(tgt_script, t, None, &mut rng));
            tgt_source.push(None);
        } else {
            let u = *next_unit.next().expect("slot count checked");
            tgt_words.push(make_word(tgt_script, src_words[u].pieces.len(), None, &mut rng));
            tgt_source.push(Some(u));
        }
    }

    let (src_text, src_tokens, src_word_tokens, src_word_chars) = render(&src_words, src_script);
    let (tgt_text, tgt_tokens, tgt_word_tokens, tgt_word_chars) = render(&tgt_words, tgt_script);
    let n_src = src_tokens.len();
    let n_tgt = tgt_tokens.len();
    let full_halluc = spec.halluc_severity == Severity::Full;

    // source side: usage weights and reverse log-probabilities
    let mut usage = vec![0.0; n_src];
    let mut src_lp = vec![0.0; n_src];
    let mut src_uncond = vec![0.0; n_src];
    let all_unused = units.is_empty() || tgt_source.iter().all(Option::is_none);
    for (w, toks) in src_word_tokens.iter().enumerate() {
        let omitted = in_ranges(&spec.omitted, w);
        let l = looks(&mut rng, omitted, false, s);
        for j in toks.clone() {
            usage[j] = if all_unused || l.alti {
                s.omitted_usage * rng.random_range(0.5..1.5)
            } else {
                rng.random_range(0.8..1.2)
            };
            (src_lp[j], src_uncond[j]) = logprobs(&mut rng, l, s);
        }
    }
    usage[n_src - 1] = rng.random_range(0.8..1.2);
    let stop_looks = looks(&mut rng, false, false, s);
    (src_lp[n_src - 1], src_uncond[n_src - 1]) = logprobs(&mut rng, stop_looks, s);

    // target side: row mass, alignment and log-probabilities
    let mut rows = Vec::with_capacity(n_tgt);
    let mut tgt_lp = Vec::with_capacity(n_tgt);
    let mut tgt_uncond = Vec::with_capacity(n_tgt);
    let mut bad_tokens = 0usize;
    let clean_row = |rng: &mut ChaCha8Rng| 0.5 + 0.5 * beta(rng, s.clean_mass_mean, s.beta_concentration);
    let mut push_row = |rng: &mut ChaCha8Rng, mass: f64, anchor: Option<usize>| {
        let weights: Vec<f64> = (0..n_src)
            .map(|j| match anchor {
                Some(a) => usage[j] * ((-(j.abs_diff(a) as f64)).exp() + 0.05),
                None => usage[j] * rng.random_range(0.5..1.5),
            })
            .collect();
        let total: f64 = weights.iter().sum();
        rows.push(weights.iter().map(|w| mass * w / total).collect::<Vec<f64>>());
    };
    for (w, toks) in tgt_word_tokens.iter().enumerate() {
        let src_unit = tgt_source[w];
        let l = looks(&mut rng, src_unit.is_none(), full_halluc, s);
        for (p, _) in toks.clone().enumerate() {
            let mass =
                if l.alti { beta(&mut rng, s.halluc_mass_mean, s.beta_concentration) } else { clean_row(&mut rng) };
            // pathological-looking rows spread thinly over the source,
            // others concentrate near one token
            let anchor = match src_unit {
                _ if l.alti => None,
                Some(u) => {
                    let r = &src_word_tokens[u];
                    Some((r.start + p).min(r.end - 1))
                }
                None => Some(rng.random_range(0..n_src)),
            };
            if src_unit.is_none() {
                bad_tokens += 1;
            }
            push_row(&mut rng, mass, anchor);
            let (lp, un) = logprobs(&mut rng, l, s);
            tgt_lp.push(lp);
            tgt_uncond.push(un);
        }
    }
    let stop_looks = looks(&mut rng, full_halluc, full_halluc, s);
    let stop_mass =
        if stop_looks.alti { beta(&mut rng, s.halluc_mass_mean, s.beta_concentration) } else { clean_row(&mut rng) };
    push_row(&mut rng, stop_mass, (!full_halluc).then_some(n_src - 1));
    let (lp, un) = logprobs(&mut rng, stop_looks, s);
    tgt_lp.push(lp);
    tgt_uncond.push(un);
    let alti = ContributionMatrix(rows);

    // attention: column mass plus a small floor, EOS grows with the share
    // of hallucinated tokens
    let bad_share = bad_tokens as f64 / n_tgt as f64;
    let eos_mean = (s.eos_mean + 0.6 * bad_share).min(0.9);
    let eos = if spec.has_eos { beta(&mut rng, eos_mean, 20.0) } else { 0.0 };
    let cols: Vec<f64> = alti.col_sums().iter().map(|c| c + 1e-3).collect();
    let col_total: f64 = cols.iter().sum();
    let mut mass: Vec<f64> = cols.iter().map(|c| (1.0 - eos) * c / col_total).collect();
    if spec.has_eos {
        mass.push(eos);
    }
    let attn = AttentionDistribution::new(mass, spec.has_eos);

    // sentence-level similarity and quality fall with severity
    let h = spec.halluc_severity.level() as f64;
    let o = spec.omission_severity.level() as f64;
    let mut embeddings = BTreeMap::new();
    for enc in &spec.encoders {
        let raw: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let src: Vec<f64> = raw.iter().map(|x| x / norm).collect();
        let noise = s.noise_sd * rng.sample::<f64, _>(StandardNormal);
        let cos = (0.9 - 0.2 * h - 0.08 * o + noise).clamp(-0.99, 0.99);
        let tgt = noisy_unit_vector(&mut rng, &src, cos);
        embeddings.insert(enc.clone(), EmbeddingPair(src, tgt));
    }
    let mut external_scores = BTreeMap::new();
    for name in &spec.externals {
        let noise = s.noise_sd * rng.sample::<f64, _>(StandardNormal);
        external_scores.insert(name.clone(), 0.85 - 0.2 * h.max(o) + noise);
    }

    let span_of = |ranges: &[Range<usize>], chars: &[Range<usize>], side: Side| -> Vec<AnnotatedSpan> {
        ranges.iter().map(|r| AnnotatedSpan::new(chars[r.start].start, chars[r.end - 1].end, side)).collect()
    };
    // a fully hallucinated translation is hallucinated up to its last mark
    let halluc_spans = if full_halluc {
        vec![AnnotatedSpan::new(0, tgt_text.chars().count(), Side::Target)]
    } else {
        span_of(&spec.hallucinated, &tgt_word_chars, Side::Target)
    };
    let annotation = Annotation {
        halluc_severity: spec.halluc_severity,
        omission_severity: spec.omission_severity,
        halluc_spans,
        omission_spans: span_of(&spec.omitted, &src_word_chars, Side::Source),
        incomprehensible: false,
    };

    Ok(TranslationRecord {
        id: spec.id.clone(),
        direction: spec.direction.clone(),
        data_source: spec.data_source.clone(),
        src_text,
        tgt_text,
        src_tokens,
        tgt_tokens,
        tgt_logprob: tgt_lp,
        tgt_logprob_uncond: Some(tgt_uncond),
        alti: Some(alti),
        attn: Some(attn),
        src_logprob_rev: Some(src_lp),
        src_logprob_rev_uncond: Some(src_uncond),
        embeddings: (!embeddings.is_empty()).then_some(embeddings),
        external_scores: (!external_scores.is_empty()).then_some(external_scores),
        annotation: Some(annotation),
    })
}

/// Shares of records per pathology level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityRates {
    #[serde(default)]
    pub word: f64,
    #[serde(default)]
    pub partial: f64,
    #[serde(default)]
    pub full: f64,
}

impl SeverityRates {
    fn counts(&self, n: usize, what: &str) -> Result<[usize; 3], SynthError> {
        let mut out = [0; 3];
        for (k, rate) in [self.word, self.partial, self.full].into_iter().enumerate() {
            if !(0.0..=1.0).contains(&rate) {
                return Err(SynthError::InvalidConfig(format!("{what} rate {rate} outside [0, 1]")));
            }
            out[k] = (rate * n as f64).round() as usize;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub directions: Vec<Direction>,
    pub records_per_direction: usize,
    pub halluc_rates: SeverityRates,
    /// Omissions are planted only in records without hallucination.
    pub omission_rates: SeverityRates,
    /// Assigned to records in turn.
    pub data_sources: Vec<String>,
    /// Inclusive range of source word counts.
    pub min_words: usize,
    pub max_words: usize,
    pub has_eos: bool,
    pub encoders: Vec<String>,
    pub externals: Vec<String>,
    pub signal: SignalParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            directions: ["eng_Latn-deu_Latn", "eng_Latn-zho_Hans", "rus_Cyrl-eng_Latn"]
                .iter()
                .map(|d| d.parse().expect("valid direction"))
                .collect(),
            records_per_direction: 500,
            halluc_rates: SeverityRates { word: 0.01, partial: 0.01, full: 0.01 },
            omission_rates: SeverityRates { word: 0.06, partial: 0.06, full: 0.05 },
            data_sources: vec!["flores".into(), "wikipedia".into()],
            min_words: 6,
            max_words: 16,
            has_eos: true,
            encoders: vec!["labse".into()],
            externals: vec!["comet_qe".into()],
            signal: SignalParams::default(),
        }
    }
}

impl SynthConfig {
    /// Reads a JSON config; missing fields take their defaults.
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| SynthError::InvalidConfig(e.to_string()))
    }

    fn validate(&self) -> Result<([usize; 3], [usize; 3]), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.directions.is_empty() {
            return bad("no directions");
        }
        if self.data_sources.is_empty() {
            return bad("no data sources");
        }
        if self.min_words < 3 || self.min_words > self.max_words {
            return bad("word counts must satisfy 3 <= min_words <= max_words");
        }
        let mut seen = std::collections::BTreeSet::new();
        if !self.directions.iter().all(|d| seen.insert(d)) {
            return bad("duplicate direction");
        }
        self.signal.validate().map_err(SynthError::InvalidConfig)?;
        let n = self.records_per_direction;
        let h = self.halluc_rates.counts(n, "hallucination")?;
        let o = self.omission_rates.counts(n, "omission")?;
        let nh: usize = h.iter().sum();
        if nh > n || o.iter().sum::<usize>() > n - nh {
            return bad("severity rates exceed the number of records");
        }
        Ok((h, o))
    }
}

/// Mixes the corpus seed with a record id so each record has its own
/// stream, independent of generation order.
fn sub_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn range_of(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Range<usize> {
    let start = rng.random_range(0..=n - len);
    start..start + len
}

/// Draws the spec of one record with the given severities.
fn draw_spec(
    cfg: &SynthConfig,
    id: String,
    direction: Direction,
    data_source: String,
    halluc: Severity,
    omission: Severity,
    rng: &mut ChaCha8Rng,
) -> RecordSpec {
    let n = rng.random_range(cfg.min_words..=cfg.max_words);
    let src_word_lengths = (0..n).map(|_| rng.random_range(2..=9)).collect();
    let omitted = match omission {
        Severity::None => vec![],
        Severity::Word => {
            let len = rng.random_range(1..=2);
            vec![range_of(rng, n, len)]
        }
        Severity::Partial => {
            let len = rng.random_range(n.div_ceil(3)..=n / 2).max(1);
            vec![range_of(rng, n, len)]
        }
        Severity::Full => vec![1..n],
    };
    let units = n - omitted.iter().map(|r| r.len()).sum::<usize>();
    let (tgt_len, hallucinated) = match halluc {
        Severity::None => (units, vec![]),
        Severity::Word => {
            let k = rng.random_range(1..=2);
            (units + k, vec![range_of(rng, units + k, k)])
        }
        Severity::Partial => {
            let k = rng.random_range(units.div_ceil(3)..=units.div_ceil(3) + 2).max(2);
            (units + k, vec![range_of(rng, units + k, k)])
        }
        Severity::Full => {
            let t = rng.random_range(cfg.min_words..=cfg.max_words);
            (t, vec![0..t])
        }
    };
    RecordSpec {
        id,
        direction,
        data_source,
        src_word_lengths,
        omitted,
        tgt_len,
        hallucinated,
        halluc_severity: halluc,
        omission_severity: omission,
        signal: cfg.signal.clone(),
        has_eos: cfg.has_eos,
        encoders: cfg.encoders.clone(),
        externals: cfg.externals.clone(),
    }
}

/// Record ids and severities for one direction: exact counts per level,
/// placed by a seeded shuffle.
fn plan_direction(
    cfg: &SynthConfig,
    d: &Direction,
    counts: ([usize; 3], [usize; 3]),
    seed: u64,
) -> Vec<(String, Severity, Severity)> {
    let n = cfg.records_per_direction;
    let levels = [Severity::Word, Severity::Partial, Severity::Full];
    let mut labels = Vec::with_capacity(n);
    for (k, &c) in counts.0.iter().enumerate() {
        labels.extend(std::iter::repeat_n((levels[k], Severity::None), c));
    }
    for (k, &c) in counts.1.iter().enumerate() {
        labels.extend(std::iter::repeat_n((Severity::None, levels[k]), c));
    }
    labels.resize(n, (Severity::None, Severity::None));
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &d.to_string()));
    labels.shuffle(&mut rng);
    labels.into_iter().enumerate().map(|(i, (h, o))| (format!("{d}-{i:05}"), h, o)).collect()
}

/// Generates a corpus whose per-direction severity counts match the
/// configured rates exactly (rounded to whole records).
pub fn generate_corpus(cfg: &SynthConfig, seed: u64) -> Result<Corpus, SynthError> {
    let counts = cfg.validate()?;
    let mut jobs = Vec::new();
    for d in &cfg.directions {
        for (i, (id, h, o)) in plan_direction(cfg, d, counts, seed).into_iter().enumerate() {
            let ds = cfg.data_sources[i % cfg.data_sources.len()].clone();
            jobs.push((d.clone(), id, ds, h, o));
        }
    }
    let build = |(d, id, ds, h, o): &(Direction, String, String, Severity, Severity)| {
        let s = sub_seed(seed, id);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let spec = draw_spec(cfg, id.clone(), d.clone(), ds.clone(), *h, *o, &mut rng);
        generate_record(&spec, s.wrapping_add(1))
    };
    #[cfg(feature = "parallel")]
    let records: Result<Vec<_>, _> = {
        use rayon::prelude::*;
        jobs.par_iter().map(build).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let records: Result<Vec<_>, _> = jobs.iter().map(build).collect();
    Corpus::new(records?).map_err(|e| SynthError::InvalidConfig(e.to_string()))
}
