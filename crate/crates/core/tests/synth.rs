use mtpath::model::*;
use mtpath::synth::*;
use mtpath::word::{gold_word_labels, segment_words};

fn small_config() -> SynthConfig {
    SynthConfig { records_per_direction: 100, ..Default::default() }
}

#[test]
fn generated_records_are_valid_and_round_trip() {
    let c = generate_corpus(&small_config(), 11).unwrap();
    for r in c.records() {
        assert!(validate_record(r).is_empty(), "{}: {:?}", r.id, validate_record(r));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.jsonl");
    write_corpus(&c, &path).unwrap();
    assert_eq!(load_corpus(&path).unwrap(), c);
}

#[test]
fn all_clean_mixture() {
    let zero = SeverityRates { word: 0.0, partial: 0.0, full: 0.0 };
    let cfg = SynthConfig { halluc_rates: zero.clone(), omission_rates: zero, ..small_config() };
    let c = generate_corpus(&cfg, 1).unwrap();
    for s in corpus_stats(&c).values() {
        assert_eq!(s.halluc_rate(Severity::None), 1.0);
        assert_eq!(s.omission_rate(Severity::None), 1.0);
    }
}

#[test]
fn output_does_not_depend_on_direction_order() {
    let cfg = small_config();
    let mut reversed = cfg.clone();
    reversed.directions.reverse();
    let a = generate_corpus(&cfg, 4).unwrap();
    let b = generate_corpus(&reversed, 4).unwrap();
    for r in a.records() {
        assert_eq!(Some(r), b.get(&r.id));
    }
}

fn spec(direction: &str) -> RecordSpec {
    RecordSpec {
        id: "p".into(),
        direction: direction.parse().unwrap(),
        data_source: "flores".into(),
        src_word_lengths: vec![4, 7, 2, 9, 5, 3],
        omitted: vec![1..3],
        tgt_len: 7,
        hallucinated: vec![0..1, 3..5],
        halluc_severity: Severity::Partial,
        omission_severity: Severity::Word,
        signal: SignalParams::default(),
        has_eos: true,
        encoders: vec![],
        externals: vec![],
    }
}

#[test]
fn planted_word_labels_match_span_labels() {
    let s = spec("eng_Latn-deu_Latn");
    let r = generate_record(&s, 2).unwrap();
    let ann = r.annotation.as_ref().unwrap();

    let tgt_words = segment_words(&r.tgt_text, false);
    let planted: Vec<bool> = (0..tgt_words.len()).map(|i| s.hallucinated.iter().any(|h| h.contains(&i))).collect();
    assert_eq!(gold_word_labels(&ann.halluc_spans, &tgt_words), planted);

    let src_words = segment_words(&r.src_text, false);
    let planted: Vec<bool> = (0..src_words.len()).map(|i| s.omitted.iter().any(|h| h.contains(&i))).collect();
    assert_eq!(gold_word_labels(&ann.omission_spans, &src_words), planted);
}

#[test]
fn han_target_labels_cover_whole_slots() {
    let s = spec("eng_Latn-zho_Hans");
    let r = generate_record(&s, 3).unwrap();
    assert!(validate_record(&r).is_empty());
    let words = segment_words(&r.tgt_text, true);
    let labels = gold_word_labels(&r.annotation.as_ref().unwrap().halluc_spans, &words);
    // one word per character; the final mark is never labeled
    assert_eq!(words.len(), r.tgt_text.chars().count());
    assert!(!labels[labels.len() - 1]);
    let labeled: usize = r.annotation.as_ref().unwrap().halluc_spans.iter().map(|h| h.end - h.start).sum();
    assert_eq!(labels.iter().filter(|l| **l).count(), labeled);
}

#[test]
fn config_reads_partial_json() {
    let cfg = SynthConfig::from_json(r#"{"records_per_direction": 20, "directions": ["fra_Latn-eng_Latn"]}"#).unwrap();
    assert_eq!(cfg.records_per_direction, 20);
    assert_eq!(cfg.min_words, SynthConfig::default().min_words);
    assert!(matches!(SynthConfig::from_json(r#"{"min_words": "six"}"#), Err(SynthError::InvalidConfig(_))));
}
