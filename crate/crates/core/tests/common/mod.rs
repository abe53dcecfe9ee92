//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use mtpath::model::{Annotation, AttentionDistribution, ContributionMatrix, Severity, TokenSpan, TranslationRecord};

const EPS: f64 = 1e-12;

/// Dense tableau simplex for `min c.x  s.t.  A x = b, x >= 0` with `b >= 0`,
/// two phases and Bland's rule. Returns the optimal objective.
pub fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    // columns: n originals, m artificials, then rhs
    let width = n + m + 1;
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(&a[i]);
            row[n + i] = 1.0;
            row[width - 1] = b[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();

    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| {
        let m = t.len();
        loop {
            // reduced costs
            let entering = (0..allowed).find(|&j| {
                let z: f64 = (0..m).map(|i| cost[basis[i]] * t[i][j]).sum();
                cost[j] - z < -EPS
            });
            let Some(e) = entering else { break };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                if t[i][e] > EPS {
                    let ratio = t[i][width - 1] / t[i][e];
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS || (ratio <= lr + EPS && basis[i] < basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let (r, _) = leave.expect("bounded transport problem");
            let p = t[r][e];
            for v in t[r].iter_mut() {
                *v /= p;
            }
            for i in 0..m {
                if i != r && t[i][e].abs() > 0.0 {
                    let f = t[i][e];
                    let pivot_row = t[r].clone();
                    for (v, pv) in t[i].iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
            basis[r] = e;
        }
    };

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    run(&mut t, &mut basis, &phase1, n + m);
    // drive zero-level artificials out of the basis; rows with no
    // original-variable entry are redundant and dropped
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= n {
            match (0..n).find(|&j| t[i][j].abs() > EPS) {
                Some(e) => {
                    let p = t[i][e];
                    for v in t[i].iter_mut() {
                        *v /= p;
                    }
                    let pivot_row = t[i].clone();
                    for (k, row) in t.iter_mut().enumerate() {
                        if k != i {
                            let f = row[e];
                            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                                *v -= f * pv;
                            }
                        }
                    }
                    basis[i] = e;
                }
                None => {
                    t.remove(i);
                    basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }
    let m = t.len();
    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat_n(0.0, m));
    run(&mut t, &mut basis, &phase2, n);
    (0..m).map(|i| phase2[basis[i]] * t[i][width - 1]).sum()
}

/// Optimal transport cost between two discrete measures of equal total
/// mass, solved as a linear program.
pub fn transport_lp(a: &[f64], b: &[f64], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..na {
        let mut row = vec![0.0; na * nb];
        for j in 0..nb {
            row[i * nb + j] = 1.0;
        }
        rows.push(row);
        rhs.push(a[i]);
    }
    // the last column constraint is implied by the others
    for j in 0..nb.saturating_sub(1) {
        let mut row = vec![0.0; na * nb];
        for i in 0..na {
            row[i * nb + j] = 1.0;
        }
        rows.push(row);
        rhs.push(b[j]);
    }
    let c: Vec<f64> = (0..na * nb).map(|k| cost(k / nb, k % nb)).collect();
    simplex_min(&rows, &rhs, &c)
}

pub fn positions(n: usize) -> Vec<f64> {
    (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect()
}

/// 1-Wasserstein distance on normalized positions by linear programming.
pub fn wass1_lp(a: &[f64], b: &[f64]) -> f64 {
    let (pa, pb) = (positions(a.len()), positions(b.len()));
    transport_lp(a, b, |i, j| (pa[i] - pb[j]).abs())
}

/// Fraction of correctly ordered cross-label pairs by enumerating all pairs.
pub fn brute_pairwise(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut total, mut penalty) = (0u64, 0u64);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] < labels[j] {
                total += 1;
                // penalty counted in halves: 2 for a wrong order, 1 for a tie
                if scores[i] > scores[j] {
                    penalty += 2;
                } else if scores[i] == scores[j] {
                    penalty += 1;
                }
            }
        }
    }
    1.0 - (penalty as f64 / 2.0) / total as f64
}

/// A small well-formed record: `n_src` and `n_tgt` one-letter tokens
/// separated by spaces, flat traces, no annotation.
pub fn record(id: &str, direction: &str, n_src: usize, n_tgt: usize) -> TranslationRecord {
    let text = |n: usize| (0..n).map(|_| "a").collect::<Vec<_>>().join(" ");
    let tokens = |n: usize| (0..n).map(|k| TokenSpan::new("a", 2 * k, 2 * k + 1)).collect::<Vec<_>>();
    TranslationRecord {
        id: id.into(),
        direction: direction.parse().unwrap(),
        data_source: "flores".into(),
        src_text: text(n_src),
        tgt_text: text(n_tgt),
        src_tokens: tokens(n_src),
        tgt_tokens: tokens(n_tgt),
        tgt_logprob: vec![-0.5; n_tgt],
        tgt_logprob_uncond: None,
        alti: Some(ContributionMatrix(vec![vec![0.5 / n_src as f64; n_src]; n_tgt])),
        attn: Some(AttentionDistribution::new(vec![1.0 / n_src as f64; n_src], false)),
        src_logprob_rev: None,
        src_logprob_rev_uncond: None,
        embeddings: None,
        external_scores: None,
        annotation: None,
    }
}

pub fn annotate(mut r: TranslationRecord, halluc: Severity, omission: Severity) -> TranslationRecord {
    use mtpath::model::{AnnotatedSpan, Side};
    let ann = Annotation {
        halluc_severity: halluc,
        omission_severity: omission,
        halluc_spans: if halluc == Severity::None { vec![] } else { vec![AnnotatedSpan::new(0, 1, Side::Target)] },
        omission_spans: if omission == Severity::None { vec![] } else { vec![AnnotatedSpan::new(0, 1, Side::Source)] },
        incomprehensible: false,
    };
    r.annotation = Some(ann);
    r
}
