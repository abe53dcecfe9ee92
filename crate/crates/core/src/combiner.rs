//! Logistic-regression combination of word-level features, trained with
//! group-wise k-fold cross-validation so that all words of one sentence
//! land in the same fold.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::word::{TokenFeature, WordRow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CombinerError {
    #[error("need at least {k} distinct groups for {k} folds, got {groups}")]
    TooFewGroups { k: usize, groups: usize },
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error("labels must be 0 or 1 (row {row} has {value})")]
    NonBinaryLabels { row: usize, value: f64 },
    #[error("feature {0:?} is constant on the training rows")]
    ConstantFeature(String),
    #[error("no training rows")]
    NoRows,
    #[error("rows have {got} features, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("did not converge after {iterations} iterations (gradient max-norm {grad_norm:e})")]
    DidNotConverge { iterations: usize, grad_norm: f64 },
    #[error("{} row(s) lack a selected feature or gold label: {}", .0.len(), .0.join(", "))]
    MissingFeature(Vec<String>),
}

/// Fold index of every group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, group: &str) -> Option<usize> {
        self.folds.get(group).copied()
    }
}

/// Shuffles the distinct groups with a seeded permutation and deals them to
/// folds round-robin.
pub fn assign_folds<S: AsRef<str>>(groups: &[S], k: usize, seed: u64) -> Result<FoldAssignment, CombinerError> {
    if k < 2 {
        return Err(CombinerError::BadFoldCount(k));
    }
    let distinct: BTreeSet<&str> = groups.iter().map(AsRef::as_ref).collect();
    if distinct.len() < k {
        return Err(CombinerError::TooFewGroups { k, groups: distinct.len() });
    }
    let mut order: Vec<&str> = distinct.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds = order.into_iter().enumerate().map(|(i, g)| (g.to_string(), i % k)).collect();
    Ok(FoldAssignment { k, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { lambda: 1e-3, tol: 1e-8, max_iter: 1000 }
    }
}

/// Fitted logistic model over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub config: LogRegConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl LinearModel {
    /// Log-odds of the positive class.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.weights)
                .zip(self.mean.iter().zip(&self.sd))
                .map(|((v, w), (m, s))| w * (v - m) / s)
                .sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    /// Weights and bias expressed on the original feature scale.
    pub fn raw_weights(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self.weights.iter().zip(&self.sd).map(|(w, s)| w / s).collect();
        let b = self.bias - w.iter().zip(&self.mean).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }
}

/// A fitted model and the trace of its optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: LinearModel,
    /// Objective value after each accepted step, starting at the initial point.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^s) without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

struct Problem<'a> {
    z: &'a [Vec<f64>],
    y: &'a [f64],
    lambda: f64,
}

impl Problem<'_> {
    /// Parameters are `[w_1 .. w_d, bias]`.
    fn loss(&self, theta: &[f64]) -> f64 {
        let d = theta.len() - 1;
        let n = self.z.len() as f64;
        let data: f64 = self
            .z
            .iter()
            .zip(self.y)
            .map(|(x, y)| {
                let s = theta[d] + x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
                softplus(s) - y * s
            })
            .sum::<f64>()
            / n;
        data + 0.5 * self.lambda * theta[..d].iter().map(|w| w * w).sum::<f64>()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let d = theta.len() - 1;
        let n = self.z.len() as f64;
        let mut g = vec![0.0; d + 1];
        for (x, y) in self.z.iter().zip(self.y) {
            let s = theta[d] + x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
            let r = sigmoid(s) - y;
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
            g[d] += r;
        }
        for gj in &mut g {
            *gj /= n;
        }
        for (gj, w) in g[..d].iter_mut().zip(theta) {
            *gj += self.lambda * w;
        }
        g
    }

    fn hessian(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let d = theta.len() - 1;
        let n = self.z.len() as f64;
        let mut h = vec![vec![0.0; d + 1]; d + 1];
        for x in self.z {
            let s = theta[d] + x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
            let p = sigmoid(s);
            let c = p * (1.0 - p) / n;
            for a in 0..=d {
                let xa = if a == d { 1.0 } else { x[a] };
                for b in 0..=a {
                    let xb = if b == d { 1.0 } else { x[b] };
                    h[a][b] += c * xa * xb;
                }
            }
        }
        for a in 0..=d {
            if a < d {
                h[a][a] += self.lambda;
            }
            for b in 0..a {
                h[b][a] = h[a][b];
            }
        }
        h
    }
}

/// Solves `h x = g` by Cholesky factorization; `None` if `h` is not
/// numerically positive definite.
fn cholesky_solve(h: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = h[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (g[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

/// Fits an L2-regularized logistic regression (bias unpenalized) by
/// Newton's method with backtracking line search. Features are
/// standardized with statistics of `x` itself.
pub fn fit_logreg(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    config: &LogRegConfig,
) -> Result<FitOutcome, CombinerError> {
    let d = feature_names.len();
    if x.is_empty() {
        return Err(CombinerError::NoRows);
    }
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(CombinerError::ShapeMismatch { expected: d, got: row.len() });
    }
    if let Some((row, &value)) = y.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
        return Err(CombinerError::NonBinaryLabels { row, value });
    }
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..d).map(|j| (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt()).collect();
    for (j, s) in sd.iter().enumerate() {
        if !(*s > 1e-12 * mean[j].abs().max(1.0)) {
            return Err(CombinerError::ConstantFeature(feature_names[j].clone()));
        }
    }
    let z: Vec<Vec<f64>> =
        x.iter().map(|r| r.iter().zip(mean.iter().zip(&sd)).map(|(v, (m, s))| (v - m) / s).collect()).collect();

    let problem = Problem { z: &z, y, lambda: config.lambda };
    let mut theta = vec![0.0; d + 1];
    let mut loss = problem.loss(&theta);
    let mut losses = vec![loss];
    let mut iterations = 0;
    let mut grad = problem.gradient(&theta);
    let mut grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    while grad_norm > config.tol {
        if iterations == config.max_iter {
            return Err(CombinerError::DidNotConverge { iterations, grad_norm });
        }
        // Newton direction, falling back to steepest descent
        let dir = cholesky_solve(&problem.hessian(&theta), &grad).unwrap_or_else(|| grad.clone());
        let slope: f64 = grad.iter().zip(&dir).map(|(g, p)| g * p).sum();
        let mut t = 1.0;
        let (next, next_loss) = if slope <= 1e-10 * loss.abs().max(1.0) {
            // close enough that the sufficient-decrease test is lost in the
            // loss's rounding: take the full step if it does not hurt, else
            // the optimum is reached to machine precision
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(p, g)| p - g).collect();
            let l = problem.loss(&cand);
            if l > loss {
                break;
            }
            (cand, l)
        } else {
            loop {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(p, g)| p - t * g).collect();
                let l = problem.loss(&cand);
                if l <= loss - ARMIJO_C * t * slope {
                    break (cand, l);
                }
                t *= 0.5;
                if t < MIN_STEP {
                    return Err(CombinerError::DidNotConverge { iterations, grad_norm });
                }
            }
        };
        theta = next;
        loss = next_loss;
        losses.push(loss);
        iterations += 1;
        grad = problem.gradient(&theta);
        grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    }

    let bias = theta[d];
    theta.truncate(d);
    Ok(FitOutcome {
        model: LinearModel {
            feature_names: feature_names.to_vec(),
            weights: theta,
            bias,
            mean,
            sd,
            config: config.clone(),
            seed: None,
        },
        losses,
        iterations,
        grad_norm,
    })
}

/// A training row: its group (sentence id), feature vector and label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub group: String,
    pub features: Vec<f64>,
    pub label: bool,
}

/// Selects `features` from word rows. Every row must carry all selected
/// features and a gold label.
pub fn labeled_rows(rows: &[WordRow], features: &[TokenFeature]) -> Result<Vec<LabeledRow>, CombinerError> {
    let mut bad = Vec::new();
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let values: Option<Vec<f64>> = features.iter().map(|f| r.features.get(f).copied()).collect();
        match (values, r.gold) {
            (Some(features), Some(label)) => out.push(LabeledRow { group: r.id.clone(), features, label }),
            _ => bad.push(format!("{}:{}:{}", r.id, r.side, r.word_index)),
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(CombinerError::MissingFeature(bad))
    }
}

#[derive(Debug, Clone)]
pub struct CrossValOutcome {
    /// Out-of-fold log-odds, aligned with the input rows.
    pub oof_scores: Vec<f64>,
    pub assignment: FoldAssignment,
    /// Model trained without each fold, indexed by fold.
    pub fold_fits: Vec<FitOutcome>,
    /// Model trained on all rows.
    pub final_fit: FitOutcome,
}

fn fit_rows(
    rows: &[LabeledRow],
    keep: impl Fn(&LabeledRow) -> bool,
    names: &[String],
    config: &LogRegConfig,
) -> Result<FitOutcome, CombinerError> {
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) =
        rows.iter().filter(|r| keep(r)).map(|r| (r.features.clone(), if r.label { 1.0 } else { 0.0 })).unzip();
    fit_logreg(&x, &y, names, config)
}

/// Group-wise k-fold training: each fold is scored by a model standardized
/// and fitted on the other folds only.
pub fn crossval_combine(
    rows: &[LabeledRow],
    feature_names: &[String],
    k: usize,
    seed: u64,
    config: &LogRegConfig,
) -> Result<CrossValOutcome, CombinerError> {
    let groups: Vec<&str> = rows.iter().map(|r| r.group.as_str()).collect();
    let assignment = assign_folds(&groups, k, seed)?;
    let fold_of: Vec<usize> = groups.iter().map(|g| assignment.folds[*g]).collect();

    let fit_fold = |f: usize| fit_rows(rows, |r| assignment.folds[&r.group] != f, feature_names, config);
    #[cfg(feature = "parallel")]
    let fold_fits: Vec<Result<FitOutcome, CombinerError>> = {
        use rayon::prelude::*;
        (0..k).into_par_iter().map(fit_fold).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fold_fits: Vec<Result<FitOutcome, CombinerError>> = (0..k).map(fit_fold).collect();
    let mut fold_fits = fold_fits.into_iter().collect::<Result<Vec<_>, _>>()?;
    for f in &mut fold_fits {
        f.model.seed = Some(seed);
    }

    let oof_scores = rows.iter().zip(&fold_of).map(|(r, &f)| fold_fits[f].model.decision(&r.features)).collect();
    let mut final_fit = fit_rows(rows, |_| true, feature_names, config)?;
    final_fit.model.seed = Some(seed);
    Ok(CrossValOutcome { oof_scores, assignment, fold_fits, final_fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn folds_round_robin() {
        let groups = ["a", "b", "c", "d", "e", "f"];
        let fa = assign_folds(&groups, 3, 7).unwrap();
        let mut sizes = [0; 3];
        for f in fa.folds.values() {
            sizes[*f] += 1;
        }
        assert_eq!(sizes, [2, 2, 2]);
        assert_eq!(fa, assign_folds(&groups, 3, 7).unwrap());
        assert_eq!(assign_folds(&["a", "b"], 3, 0), Err(CombinerError::TooFewGroups { k: 3, groups: 2 }));
        assert_eq!(assign_folds(&groups, 1, 0), Err(CombinerError::BadFoldCount(1)));
    }

    #[test]
    fn repeated_groups_share_a_fold() {
        let groups = ["s1", "s1", "s2", "s3", "s3", "s3", "s4"];
        let fa = assign_folds(&groups, 2, 1).unwrap();
        assert_eq!(fa.folds.len(), 4);
    }

    #[test]
    fn constant_labels_drive_probability_down() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y = vec![0.0; 20];
        let fit = fit_logreg(&x, &y, &names(1), &LogRegConfig::default()).unwrap();
        assert!(fit.model.weights[0].abs() < 1e-6);
        assert!(fit.model.bias < -10.0);
        assert!(x.iter().all(|r| fit.model.probability(r) < 0.01));
    }

    #[test]
    fn separated_data_gets_the_right_sign() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i >= 5 { 1.0 } else { 0.0 }).collect();
        let fit = fit_logreg(&x, &y, &names(1), &LogRegConfig::default()).unwrap();
        assert!(fit.model.weights[0] > 0.0);
        let y_rev: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let fit = fit_logreg(&x, &y_rev, &names(1), &LogRegConfig::default()).unwrap();
        assert!(fit.model.weights[0] < 0.0);
    }

    #[test]
    fn input_errors() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            fit_logreg(&x, &[0.0, 0.5], &names(1), &LogRegConfig::default()),
            Err(CombinerError::NonBinaryLabels { row: 1, .. })
        ));
        let flat = vec![vec![1.0], vec![1.0]];
        assert_eq!(
            fit_logreg(&flat, &[0.0, 1.0], &names(1), &LogRegConfig::default()).unwrap_err(),
            CombinerError::ConstantFeature("f0".into())
        );
        assert_eq!(fit_logreg(&[], &[], &names(1), &LogRegConfig::default()).unwrap_err(), CombinerError::NoRows);
        let tight = LogRegConfig { max_iter: 1, tol: 1e-14, lambda: 0.0 };
        let y = [0.0, 1.0];
        assert!(matches!(fit_logreg(&x, &y, &names(1), &tight), Err(CombinerError::DidNotConverge { .. })));
    }

    #[test]
    fn loss_never_increases() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect();
        let fit = fit_logreg(&x, &y, &names(2), &LogRegConfig { lambda: 0.01, ..Default::default() }).unwrap();
        assert!(fit.losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.grad_norm <= 1e-8);
    }

    #[test]
    fn raw_weights_match_decision() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 3.0 + 1.0, ((i * 5) % 7) as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| (i % 2) as f64).collect();
        let m = fit_logreg(&x, &y, &names(2), &LogRegConfig::default()).unwrap().model;
        let (w, b) = m.raw_weights();
        for r in &x {
            let direct = b + w[0] * r[0] + w[1] * r[1];
            assert!((direct - m.decision(r)).abs() < 1e-9);
        }
    }
}
