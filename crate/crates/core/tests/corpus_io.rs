mod common;

use std::path::PathBuf;

use mtpath::model::*;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn violations_of(name: &str) -> Vec<RecordViolations> {
    match load_corpus(fixture(name)) {
        Err(CorpusError::Validation(v)) => v,
        other => panic!("{name}: expected validation failure, got {other:?}"),
    }
}

#[test]
fn valid_fixture_loads() {
    let c = load_corpus(fixture("valid.jsonl")).unwrap();
    assert_eq!(c.len(), 3);
    let r = c.get("deu-001").unwrap();
    let a = r.annotation.as_ref().unwrap();
    assert_eq!(a.halluc_severity, Severity::Word);
    assert_eq!(a.halluc_spans, vec![AnnotatedSpan::new(18, 22, Side::Target)]);
    assert_eq!(char_slice(&r.tgt_text, 18, 22), Some("gern"));
    let z = c.get("zho-001").unwrap();
    assert_eq!(z.annotation.as_ref().unwrap().omission_spans, vec![AnnotatedSpan::new(5, 12, Side::Source)]);
    assert!(c.get("deu-002").unwrap().annotation.is_none());
}

#[test]
fn corrupted_fixtures_name_their_violation() {
    let v = violations_of("unbalanced.jsonl");
    assert_eq!(v.len(), 1);
    assert_eq!((v[0].id.as_str(), v[0].line), ("deu-001", 2));
    assert!(v[0].violations.iter().any(|x| x.field == "annotation.halluc_markup" && x.rule.contains("unbalanced")));

    let v = violations_of("length_mismatch.jsonl");
    assert!(v[0].violations.iter().any(|x| x.field == "tgt_logprob" && x.rule.contains("does not match")));

    let v = violations_of("positive_logprob.jsonl");
    assert!(v[0].violations.iter().any(|x| x.field == "tgt_logprob[3]" && x.rule == "positive log-probability"));

    let v = violations_of("attention_mass.jsonl");
    assert!(v[0].violations.iter().any(|x| x.field == "attn" && x.rule.contains("expected 1")));
}

#[test]
fn write_then_load_is_identity() {
    let c = load_corpus(fixture("valid.jsonl")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.jsonl");
    write_corpus(&c, &path).unwrap();
    assert_eq!(load_corpus(&path).unwrap(), c);
}

#[test]
fn duplicate_ids_are_rejected() {
    let r = common::record("x", "eng_Latn-deu_Latn", 2, 2);
    assert!(matches!(Corpus::new(vec![r.clone(), r]), Err(CorpusError::DuplicateId(_))));
}

#[test]
fn stats_on_fixed_counts() {
    // 100 records: 1 of each hallucination level, omissions 6/6/5
    let mut records = Vec::new();
    let levels = [Severity::Word, Severity::Partial, Severity::Full];
    for i in 0..100 {
        let (h, o) = match i {
            0..=2 => (levels[i], Severity::None),
            3..=8 => (Severity::None, Severity::Word),
            9..=14 => (Severity::None, Severity::Partial),
            15..=19 => (Severity::None, Severity::Full),
            _ => (Severity::None, Severity::None),
        };
        records.push(common::annotate(common::record(&format!("r{i:03}"), "eng_Latn-deu_Latn", 3, 3), h, o));
    }
    let c = Corpus::new(records).unwrap();
    let s = &corpus_stats(&c)[&"eng_Latn-deu_Latn".parse::<Direction>().unwrap()];
    assert_eq!(s.any_halluc(), 0.03);
    assert_eq!(s.halluc_rate(Severity::Full), 0.01);
    assert_eq!(s.any_omission(), 0.17);
    assert_eq!(s.omission_rate(Severity::Full), 0.05);
}

fn markup_case() -> impl Strategy<Value = (String, Vec<std::ops::Range<usize>>)> {
    (prop::collection::vec(("[a-zé猫 .]{0,4}", "[a-zé猫 .]{1,4}"), 0..5), "[a-zé猫 .]{0,4}").prop_map(
        |(parts, tail)| {
            let mut text = String::new();
            let mut spans = Vec::new();
            for (gap, span) in parts {
                text.push_str(&gap);
                let start = text.chars().count();
                text.push_str(&span);
                spans.push(start..text.chars().count());
            }
            text.push_str(&tail);
            (text, spans)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn markup_render_parse_roundtrip((plain, spans) in markup_case()) {
        let marked = render_span_markup(&plain, &spans, "<<", ">>");
        let (p, s) = parse_span_markup(&marked, "<<", ">>").unwrap();
        prop_assert_eq!(&p, &plain);
        prop_assert_eq!(&s, &spans);
        prop_assert_eq!(render_span_markup(&plain, &s, "<<", ">>"), marked);
    }
}
