//! Train-on-synthetic, test-on-real utility with built-in models.
//!
//! Each task fits the same model once on the real training split and once
//! on the synthetic table, scores both on the real test split and reports
//! absolute differences.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ColumnData, ParsedTable};

pub const LOGISTIC_L2: f64 = 1e-4;
pub const LOGISTIC_EPOCHS: usize = 500;
pub const RIDGE_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub auc: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionScores {
    pub mae: f64,
    pub evs: f64,
    pub r2: f64,
}

/// Absolute differences; accuracy in percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum UtilityDiff {
    Classification {
        acc_pp: f64,
        auc: f64,
        f1: f64,
        real: ClassificationScores,
        synthetic: ClassificationScores,
    },
    Regression {
        mae: f64,
        evs: f64,
        r2: f64,
        real: RegressionScores,
        synthetic: RegressionScores,
    },
}

/// Maps non-target columns to a numeric design: numeric values as-is,
/// categoricals one-hot over a shared vocabulary.
struct Featurizer {
    target: usize,
    vocab: Vec<Option<Vec<String>>>,
}

impl Featurizer {
    fn new(tables: &[&ParsedTable], target: usize) -> Result<Self> {
        let first = tables[0];
        if target >= first.columns.len() {
            return Err(Error::Data(format!("target index {target} out of range")));
        }
        let mut vocab = Vec::with_capacity(first.columns.len());
        for c in 0..first.columns.len() {
            let v = match &first.columns[c] {
                ColumnData::Numeric(_) => None,
                ColumnData::Categorical(_) => Some(categories(tables, c)?),
            };
            vocab.push(v);
        }
        let f = Self { target, vocab };
        if f.width() == 0 {
            return Err(Error::Data("no feature columns besides the target".into()));
        }
        Ok(f)
    }

    fn width(&self) -> usize {
        self.vocab
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != self.target)
            .map(|(_, v)| v.as_ref().map_or(1, Vec::len))
            .sum()
    }

    fn design(&self, table: &ParsedTable) -> Vec<Vec<f64>> {
        let mut rows = vec![Vec::with_capacity(self.width()); table.rows];
        for (c, col) in table.columns.iter().enumerate() {
            if c == self.target {
                continue;
            }
            match (col, &self.vocab[c]) {
                (ColumnData::Numeric(v), _) => {
                    for (r, x) in rows.iter_mut().zip(v) {
                        r.push(*x);
                    }
                }
                (ColumnData::Categorical(v), Some(vocab)) => {
                    for (r, s) in rows.iter_mut().zip(v) {
                        r.extend(vocab.iter().map(|k| if k == s { 1.0 } else { 0.0 }));
                    }
                }
                (ColumnData::Categorical(_), None) => unreachable!("vocabulary built per column kind"),
            }
        }
        rows
    }
}

fn categories(tables: &[&ParsedTable], c: usize) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for t in tables {
        match &t.columns[c] {
            ColumnData::Categorical(v) => out.extend(v.iter().cloned()),
            ColumnData::Numeric(_) => {
                return Err(Error::Data(format!("column {c} differs in kind between tables")))
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Per-feature standardization fitted on one design matrix.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in x {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Multinomial logistic regression fitted by full-batch gradient descent.
#[derive(Debug, Clone)]
pub struct Logistic {
    scaler: Standardizer,
    /// `(d + 1) × classes`, bias in the last row.
    weights: Vec<Vec<f64>>,
    classes: usize,
}

impl Logistic {
    /// Weights start at zero, so the fit is deterministic. The step size is
    /// the inverse of a Lipschitz bound for the loss gradient on
    /// standardized features, which makes every step a descent step.
    pub fn fit(x: &[Vec<f64>], y: &[usize], classes: usize, l2: f64, epochs: usize) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Data("logistic regression needs matching non-empty x and y".into()));
        }
        let mut seen = vec![false; classes];
        for &c in y {
            seen[c] = true;
        }
        if seen.iter().filter(|s| **s).count() < 2 {
            return Err(Error::Data("training target has a single class".into()));
        }
        let scaler = Standardizer::fit(x);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
        let d = scaler.mean.len();
        let n = xs.len() as f64;
        let step = 1.0 / (0.5 * (d + 1) as f64 + l2);
        let mut model = Self {
            scaler,
            weights: vec![vec![0.0; classes]; d + 1],
            classes,
        };
        let mut probs = vec![0.0; classes];
        for _ in 0..epochs {
            let mut grad = vec![vec![0.0; classes]; d + 1];
            for (row, &label) in xs.iter().zip(y) {
                model.scores_into(row, &mut probs);
                softmax(&mut probs);
                probs[label] -= 1.0;
                for k in 0..classes {
                    let g = probs[k] / n;
                    for (f, v) in row.iter().enumerate() {
                        grad[f][k] += g * v;
                    }
                    grad[d][k] += g;
                }
            }
            for f in 0..=d {
                for k in 0..classes {
                    let reg = if f < d { l2 * model.weights[f][k] } else { 0.0 };
                    model.weights[f][k] -= step * (grad[f][k] + reg);
                }
            }
        }
        Ok(model)
    }

    fn scores_into(&self, xs: &[f64], out: &mut [f64]) {
        let d = xs.len();
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.weights[d][k] + xs.iter().enumerate().map(|(f, v)| v * self.weights[f][k]).sum::<f64>();
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.classes];
        self.scores_into(&self.scaler.apply(row), &mut p);
        softmax(&mut p);
        p
    }
}

fn softmax(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

/// Ridge regression on standardized features with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct Ridge {
    scaler: Standardizer,
    weights: Vec<f64>,
    intercept: f64,
}

impl Ridge {
    pub fn fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Data("ridge regression needs matching non-empty x and y".into()));
        }
        let d = x[0].len();
        if d == 0 {
            return Err(Error::Data("ridge regression needs at least one feature".into()));
        }
        let scaler = Standardizer::fit(x);
        let n = x.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let xs = DMatrix::from_fn(n, d, |r, c| (x[r][c] - scaler.mean[c]) / scaler.std[c]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let gram = xs.transpose() * &xs + DMatrix::identity(d, d) * lambda;
        let rhs = xs.transpose() * yc;
        let w = gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Data("ridge system is singular".into()))?;
        Ok(Self {
            scaler,
            weights: w.iter().copied().collect(),
            intercept: y_mean,
        })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .scaler
                .apply(row)
                .iter()
                .zip(&self.weights)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Slopes in the original feature units.
    pub fn coefficients(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.scaler.std).map(|(w, s)| w / s).collect()
    }
}

pub fn classification_scores(y: &[usize], proba: &[Vec<f64>], classes: usize) -> Result<ClassificationScores> {
    let pred: Vec<usize> = proba.iter().map(|p| crate::codec::argmax(p)).collect();
    let accuracy = y.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;

    let mut f1_sum = 0.0;
    let mut labels = 0;
    for k in 0..classes {
        let tp = y.iter().zip(&pred).filter(|(a, b)| **a == k && **b == k).count() as f64;
        let actual = y.iter().filter(|a| **a == k).count() as f64;
        let predicted = pred.iter().filter(|b| **b == k).count() as f64;
        if actual + predicted == 0.0 {
            continue;
        }
        labels += 1;
        f1_sum += 2.0 * tp / (actual + predicted);
    }
    let macro_f1 = f1_sum / labels as f64;

    let auc = if classes == 2 {
        let s: Vec<f64> = proba.iter().map(|p| p[1]).collect();
        let pos: Vec<bool> = y.iter().map(|c| *c == 1).collect();
        roc_auc(&s, &pos)
            .ok_or_else(|| Error::Data("test split holds a single class; AUC undefined".into()))?
    } else {
        let mut sum = 0.0;
        let mut count = 0;
        for k in 0..classes {
            let s: Vec<f64> = proba.iter().map(|p| p[k]).collect();
            let pos: Vec<bool> = y.iter().map(|c| *c == k).collect();
            if let Some(a) = roc_auc(&s, &pos) {
                sum += a;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Data("test split holds a single class; AUC undefined".into()));
        }
        sum / count as f64
    };
    Ok(ClassificationScores {
        accuracy,
        auc,
        macro_f1,
    })
}

/// Mann-Whitney AUC with midranks for ties; `None` without both classes.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if positive[o] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

pub fn regression_scores(y: &[f64], pred: &[f64]) -> Result<RegressionScores> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::Data("test target is constant; R² undefined".into()));
    }
    let resid: Vec<f64> = y.iter().zip(pred).map(|(a, b)| a - b).collect();
    let mae = resid.iter().map(|r| r.abs()).sum::<f64>() / n;
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    let r_mean = resid.iter().sum::<f64>() / n;
    let r_var: f64 = resid.iter().map(|r| (r - r_mean).powi(2)).sum();
    Ok(RegressionScores {
        mae,
        evs: 1.0 - r_var / ss_tot,
        r2: 1.0 - ss_res / ss_tot,
    })
}

fn class_labels(table: &ParsedTable, target: usize, vocab: &[String]) -> Result<Vec<usize>> {
    match &table.columns[target] {
        ColumnData::Categorical(v) => Ok(v
            .iter()
            .map(|s| vocab.iter().position(|k| k == s).expect("vocabulary covers every table"))
            .collect()),
        ColumnData::Numeric(_) => Err(Error::Data("classification target must be categorical".into())),
    }
}

/// `(ΔACC in percentage points, ΔAUC, Δmacro-F1)` plus both score sets.
pub fn tstr_classify(
    real_train: &ParsedTable,
    real_test: &ParsedTable,
    synth: &ParsedTable,
    target: usize,
) -> Result<UtilityDiff> {
    let tables = [real_train, real_test, synth];
    let feat = Featurizer::new(&tables, target)?;
    let vocab = categories(&tables, target)?;
    let classes = vocab.len();
    let test_x = feat.design(real_test);
    let test_y = class_labels(real_test, target, &vocab)?;
    let score = |train: &ParsedTable| -> Result<ClassificationScores> {
        let y = class_labels(train, target, &vocab)?;
        let model = Logistic::fit(&feat.design(train), &y, classes, LOGISTIC_L2, LOGISTIC_EPOCHS)?;
        let proba: Vec<Vec<f64>> = test_x.iter().map(|r| model.predict_proba(r)).collect();
        classification_scores(&test_y, &proba, classes)
    };
    let real = score(real_train)?;
    let synthetic = score(synth)?;
    Ok(UtilityDiff::Classification {
        acc_pp: 100.0 * (real.accuracy - synthetic.accuracy).abs(),
        auc: (real.auc - synthetic.auc).abs(),
        f1: (real.macro_f1 - synthetic.macro_f1).abs(),
        real,
        synthetic,
    })
}

fn numeric_target(table: &ParsedTable, target: usize) -> Result<&[f64]> {
    match &table.columns[target] {
        ColumnData::Numeric(v) => Ok(v),
        ColumnData::Categorical(_) => Err(Error::Data("regression target must be numeric".into())),
    }
}

/// `(ΔMAE, ΔEVS, ΔR²)` plus both score sets.
pub fn tstr_regress(
    real_train: &ParsedTable,
    real_test: &ParsedTable,
    synth: &ParsedTable,
    target: usize,
) -> Result<UtilityDiff> {
    let feat = Featurizer::new(&[real_train, real_test, synth], target)?;
    let test_x = feat.design(real_test);
    let test_y = numeric_target(real_test, target)?;
    let score = |train: &ParsedTable| -> Result<RegressionScores> {
        let model = Ridge::fit(&feat.design(train), numeric_target(train, target)?, RIDGE_LAMBDA)?;
        let pred: Vec<f64> = test_x.iter().map(|r| model.predict(r)).collect();
        regression_scores(test_y, &pred)
    };
    let real = score(real_train)?;
    let synthetic = score(synth)?;
    Ok(UtilityDiff::Regression {
        mae: (real.mae - synthetic.mae).abs(),
        evs: (real.evs - synthetic.evs).abs(),
        r2: (real.r2 - synthetic.r2).abs(),
        real,
        synthetic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_without_penalty_recovers_identity() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let y = [1.0, 2.0, 3.0];
        let m = Ridge::fit(&x, &y, 0.0).unwrap();
        assert!((m.coefficients()[0] - 1.0).abs() < 1e-12);
        let pred: Vec<f64> = x.iter().map(|r| m.predict(r)).collect();
        assert!((regression_scores(&y, &pred).unwrap().r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.9], &[false, true]), Some(1.0));
        assert_eq!(roc_auc(&[0.9, 0.1], &[false, true]), Some(0.0));
        assert_eq!(roc_auc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, true]), None);
    }

    #[test]
    fn logistic_separates_and_rejects_one_class() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let m = Logistic::fit(&x, &y, 2, LOGISTIC_L2, LOGISTIC_EPOCHS).unwrap();
        let proba: Vec<Vec<f64>> = x.iter().map(|r| m.predict_proba(r)).collect();
        let s = classification_scores(&y, &proba, 2).unwrap();
        assert_eq!(s.accuracy, 1.0);
        assert_eq!(s.auc, 1.0);
        assert!(Logistic::fit(&x, &[0; 40], 2, LOGISTIC_L2, 10).is_err());
    }
}
