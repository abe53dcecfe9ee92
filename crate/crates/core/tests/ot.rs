mod common;

use mtpath::attn_ot::*;
use mtpath::model::{AttentionDistribution, Corpus};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(mass: Vec<f64>) -> AttentionDistribution {
    AttentionDistribution::new(mass, false)
}

fn random_mass(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
    if m.iter().all(|v| *v == 0.0) {
        m[rng.random_range(0..n)] = 1.0;
    }
    let s: f64 = m.iter().sum();
    m.iter_mut().for_each(|v| *v /= s);
    m
}

#[test]
fn wass1_matches_linear_program() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..500 {
        let (na, nb) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let a = random_mass(&mut rng, na);
        let b = random_mass(&mut rng, nb);
        let fast = wass1_positions(&dist(a.clone()), &dist(b.clone()));
        let lp = common::wass1_lp(&a, &b);
        assert!((fast - lp).abs() < 1e-9, "{a:?} {b:?}: {fast} vs {lp}");
    }
}

#[test]
fn wass_to_unif_matches_zero_one_transport() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let a = random_mass(&mut rng, n);
        let u = vec![1.0 / n as f64; n];
        let lp = common::transport_lp(&a, &u, |i, j| if i == j { 0.0 } else { 1.0 });
        assert!((wass_to_unif(&dist(a.clone())) - lp).abs() < 1e-9, "{a:?}");
    }
}

#[test]
fn wass_to_unif_closed_forms() {
    for n in 2..=10 {
        assert_eq!(wass_to_unif(&dist(vec![1.0 / n as f64; n])), 0.0);
        let mut one_hot = vec![0.0; n];
        one_hot[n / 2] = 1.0;
        assert_eq!(wass_to_unif(&dist(one_hot)), (n as f64 - 1.0) / n as f64);
    }
    assert_eq!(wass_to_unif(&dist(vec![0.5, 0.5, 0.0, 0.0])), 0.5);
}

#[test]
fn small_transport_cases() {
    assert_eq!(wass1_positions(&dist(vec![1.0]), &dist(vec![0.5, 0.5])), 0.25);
    assert!((common::wass1_lp(&[1.0], &[0.5, 0.5]) - 0.25).abs() < 1e-12);
    assert_eq!(wass1_positions(&dist(vec![1.0, 0.0]), &dist(vec![0.0, 1.0])), 0.5);
}

#[test]
fn wass_to_data_takes_bottom_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let refs: Vec<Vec<f64>> = (0..5).map(|_| random_mass(&mut rng, 4)).collect();
    let set = ReferenceSet {
        direction: "eng_Latn-deu_Latn".parse().unwrap(),
        drop_eos: false,
        ids: (0..5).map(|i| format!("r{i}")).collect(),
        distributions: refs.iter().cloned().map(dist).collect(),
        source_lengths: vec![4; 5],
    };
    let q = random_mass(&mut rng, 4);
    let mut oracle: Vec<f64> = refs.iter().map(|r| common::wass1_lp(&q, r)).collect();
    oracle.sort_by(f64::total_cmp);
    let expected = oracle[..3].iter().sum::<f64>() / 3.0;
    let got = wass_to_data(&dist(q), &set, &OtParams { k: 3, ..Default::default() });
    assert!((got - expected).abs() < 1e-9);
    let member = wass_to_data(&set.distributions[2], &set, &OtParams { k: 1, ..Default::default() });
    assert_eq!(member, 0.0);
}

#[test]
fn disjoint_filter_criteria_drop_union() {
    // records 0-1 have the worst length ratio, 8-9 the worst log-probability
    let records = (0..10)
        .map(|i| {
            let n_tgt = if i < 2 { 8 } else { 4 };
            let mut r = common::record(&format!("r{i}"), "eng_Latn-deu_Latn", 4, n_tgt);
            r.tgt_logprob = vec![-0.1 * (i as f64 + 1.0); n_tgt];
            if i < 2 {
                r.tgt_logprob = vec![-0.01; n_tgt];
            }
            r
        })
        .collect();
    let c = Corpus::new(records).unwrap();
    let sets = build_reference_set(&c, false, &ReferenceFilter::default()).unwrap();
    let ids = &sets.values().next().unwrap().ids;
    assert_eq!(ids, &["r2", "r3", "r4", "r5", "r6", "r7"]);

    let only_len = ReferenceFilter { seq_logprob: false, similarity: None, ..Default::default() };
    let sets = build_reference_set(&c, false, &only_len).unwrap();
    assert_eq!(sets.values().next().unwrap().len(), 8);
}

#[test]
fn calibration_quantiles_follow_interpolation() {
    let wtu: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    let wtd: Vec<f64> = (0..100).map(|i| 2.0 * i as f64 / 99.0).collect();
    let cal =
        calibration_from_scores("eng_Latn-deu_Latn".parse().unwrap(), false, &wtu, &wtd, &OtParams::default()).unwrap();
    // type-7: h = (n - 1) q
    let oracle = |xs: &[f64], q: f64| {
        let h = (xs.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        xs[lo] + (h - lo as f64) * (xs[(lo + 1).min(xs.len() - 1)] - xs[lo])
    };
    assert_eq!(cal.q1_wtu, oracle(&wtu, 0.01));
    assert_eq!(cal.q99_wtd, oracle(&wtd, 0.99));
    assert!((cal.q1_wtu - 0.01).abs() < 1e-12 && (cal.q99_wtu - 0.99).abs() < 1e-12);

    let flat = vec![0.1; 20];
    assert!(matches!(
        calibration_from_scores("eng_Latn-deu_Latn".parse().unwrap(), false, &flat, &wtd[..20], &OtParams::default()),
        Err(OtError::DegenerateCalibration(_))
    ));
}

fn mass_strategy(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..=max).prop_filter_map("non-zero mass", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #[test]
    fn wass1_is_a_metric(a in mass_strategy(8), b in mass_strategy(8), c in mass_strategy(8)) {
        let (a, b, c) = (dist(a), dist(b), dist(c));
        let ab = wass1_positions(&a, &b);
        prop_assert!((ab - wass1_positions(&b, &a)).abs() < 1e-9);
        prop_assert!(ab >= 0.0);
        prop_assert!(wass1_positions(&a, &a).abs() < 1e-12);
        prop_assert!(ab <= wass1_positions(&a, &c) + wass1_positions(&c, &b) + 1e-9);
    }

    #[test]
    fn mixing_toward_uniform_never_increases(a in mass_strategy(8), t in 0.0f64..1.0) {
        let n = a.len();
        let mixed: Vec<f64> = a.iter().map(|v| (1.0 - t) * v + t / n as f64).collect();
        prop_assert!(wass_to_unif(&dist(mixed)) <= wass_to_unif(&dist(a)) + 1e-12);
    }
}
