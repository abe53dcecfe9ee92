mod common;

use std::collections::BTreeSet;

use mtpath::model::Corpus;
use mtpath::scores::{ScoreRow, ScoreTable};
use mtpath::selection::*;

fn setup(values: &[f64]) -> (Corpus, ScoreTable) {
    let records = (0..values.len()).map(|i| common::record(&format!("r{i:03}"), "eng_Latn-deu_Latn", 2, 2)).collect();
    let rows = values
        .iter()
        .enumerate()
        .map(|(i, v)| ScoreRow {
            id: format!("r{i:03}"),
            direction: "eng_Latn-deu_Latn".parse().unwrap(),
            data_source: "flores".into(),
            values: vec![Some(*v)],
        })
        .collect();
    (Corpus::new(records).unwrap(), ScoreTable { detectors: vec!["d".into()], rows })
}

#[test]
fn equal_scores_give_equal_weights() {
    let (c, t) = setup(&[0.0; 20]);
    let ids: Vec<&str> = c.records().iter().map(|r| r.id.as_str()).collect();
    let w = quantile_weights(&t, &ids, &["d".into()]).unwrap();
    assert!(w.iter().all(|x| *x == w[0]));
}

#[test]
fn quantile_draw_frequency_matches_weight() {
    let values: Vec<f64> = (0..200).map(|i| i as f64).collect();
    let (c, t) = setup(&values);
    let ids: Vec<&str> = c.records().iter().map(|r| r.id.as_str()).collect();
    let w = quantile_weights(&t, &ids, &["d".into()]).unwrap();
    let p = w[199] / w.iter().sum::<f64>();
    let runs = 4000;
    let hits = (0..runs)
        .filter(|seed| {
            let a = select(&c, &t, &["d".into()], Strategy::Quantile, 1, *seed, &BTreeSet::new()).unwrap();
            a.ids[0] == "r199"
        })
        .count();
    let freq = hits as f64 / runs as f64;
    let sd = (p * (1.0 - p) / runs as f64).sqrt();
    assert!((freq - p).abs() < 4.0 * sd, "{freq} vs {p}");
}

#[test]
fn strategies_return_distinct_ids() {
    let values: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
    let (c, t) = setup(&values);
    for strategy in [Strategy::Uniform, Strategy::Quantile, Strategy::Worst] {
        for n in [1, 7, 30] {
            let a = select(&c, &t, &["d".into()], strategy, n, 3, &BTreeSet::new()).unwrap();
            let set: BTreeSet<_> = a.ids.iter().collect();
            assert_eq!((a.ids.len(), set.len()), (n, n));
            let again = select(&c, &t, &["d".into()], strategy, n, 3, &BTreeSet::new()).unwrap();
            assert_eq!(a, again);
        }
    }
    let all = select(&c, &t, &[], Strategy::Uniform, 30, 0, &BTreeSet::new()).unwrap();
    assert_eq!(all.ids.iter().collect::<BTreeSet<_>>().len(), 30);
}
