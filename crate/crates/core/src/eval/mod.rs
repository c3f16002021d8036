//! Statistical similarity, downstream utility and membership inference.

mod mia;
mod stats;
mod utility;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use mia::{mia, mia_raw, nearest_distances, MiaOutcome};
pub use stats::{
    association_matrix, correlation_ratio, cramers_v, diff_corr, histogram, jsd, pearson, wd_1d,
    wd_scaled,
};
pub use utility::{
    classification_scores, regression_scores, roc_auc, tstr_classify, tstr_regress,
    ClassificationScores, Logistic, RegressionScores, Ridge, UtilityDiff, LOGISTIC_EPOCHS,
    LOGISTIC_L2, RIDGE_LAMBDA,
};

use crate::codec::{format_number, ColumnKind, TableSchema, SINGULAR_TOL};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Share of the real table used to train the real-data models.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

/// A raw table parsed column-wise against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTable {
    pub names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub columns: Vec<ColumnData>,
    pub rows: usize,
}

impl ParsedTable {
    /// Parses cells in schema order; rows with an unparseable numeric cell
    /// or an empty categorical cell are dropped and counted.
    pub fn parse(raw: &[Vec<String>], schema: &TableSchema) -> Result<(Self, usize)> {
        let width = schema.columns.len();
        let mut columns: Vec<ColumnData> = schema
            .columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
                _ => ColumnData::Numeric(Vec::new()),
            })
            .collect();
        let mut rows = 0;
        let mut dropped = 0;
        'rows: for (i, r) in raw.iter().enumerate() {
            if r.len() != width {
                return Err(Error::Data(format!(
                    "row {i} has {} cells, schema has {width} columns",
                    r.len()
                )));
            }
            for (cell, col) in r.iter().zip(&columns) {
                let ok = match col {
                    ColumnData::Numeric(_) => {
                        cell.trim().parse::<f64>().is_ok_and(f64::is_finite)
                    }
                    ColumnData::Categorical(_) => !cell.trim().is_empty(),
                };
                if !ok {
                    dropped += 1;
                    continue 'rows;
                }
            }
            for (cell, col) in r.iter().zip(columns.iter_mut()) {
                match col {
                    ColumnData::Numeric(v) => v.push(cell.trim().parse().expect("checked above")),
                    ColumnData::Categorical(v) => v.push(cell.trim().to_string()),
                }
            }
            rows += 1;
        }
        let table = Self {
            names: schema.columns.iter().map(|c| c.name.clone()).collect(),
            kinds: schema.columns.iter().map(|c| c.kind).collect(),
            columns,
            rows,
        };
        Ok((table, dropped))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                ColumnData::Numeric(v) => ColumnData::Numeric(idx.iter().map(|&i| v[i]).collect()),
                ColumnData::Categorical(v) => {
                    ColumnData::Categorical(idx.iter().map(|&i| v[i].clone()).collect())
                }
            })
            .collect();
        Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            columns,
            rows: idx.len(),
        }
    }

    /// Seeded shuffle split into `(train, test)`.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let mut idx: Vec<usize> = (0..self.rows).collect();
        idx.shuffle(&mut seeded(seed));
        let cut = ((self.rows as f64) * train_fraction).round() as usize;
        if cut == 0 || cut >= self.rows {
            return Err(Error::Data(format!(
                "cannot split {} rows into non-empty train and test parts",
                self.rows
            )));
        }
        Ok((self.select_rows(&idx[..cut]), self.select_rows(&idx[cut..])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScore {
    pub column: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    /// `None` for a non-private run or when unknown.
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub seed: u64,
    pub real_rows: usize,
    pub synthetic_rows: usize,
    pub dropped_real: usize,
    pub dropped_synthetic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Numeric columns, min-max scaled; mixed columns use their
    /// non-singular values.
    pub wd: Vec<ColumnScore>,
    /// Categorical columns.
    pub jsd: Vec<ColumnScore>,
    /// Mixed columns: JSD of the singular-value-versus-continuous indicator.
    pub singular_jsd: Vec<ColumnScore>,
    pub diff_corr: f64,
    pub utility: Option<UtilityDiff>,
    pub mia_accuracy: Option<f64>,
    pub metadata: EvalMetadata,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn total_wd(&self) -> f64 {
        self.wd.iter().map(|s| s.value).sum()
    }
}

/// Labels each mixed-column value as one of its singular values or as
/// continuous.
fn singular_indicator(values: &[f64], singular: &[f64]) -> Vec<String> {
    values
        .iter()
        .map(|v| {
            singular
                .iter()
                .find(|s| (*s - v).abs() <= SINGULAR_TOL)
                .map_or_else(|| "continuous".to_string(), |s| format_number(*s))
        })
        .collect()
}

fn continuous_part(values: &[f64], singular: &[f64]) -> Vec<f64> {
    values
        .iter()
        .copied()
        .filter(|v| !singular.iter().any(|s| (s - v).abs() <= SINGULAR_TOL))
        .collect()
}

/// Compares a synthetic table to the real one. The real table is split
/// with `seed` for the utility task, which runs when the schema names a
/// target.
pub fn evaluate(
    real: &[Vec<String>],
    synth: &[Vec<String>],
    schema: &TableSchema,
    seed: u64,
) -> Result<EvalReport> {
    schema.validate()?;
    let (real_t, dropped_real) = ParsedTable::parse(real, schema)?;
    let (synth_t, dropped_synth) = ParsedTable::parse(synth, schema)?;
    if real_t.rows == 0 || synth_t.rows == 0 {
        return Err(Error::Data("both tables need at least one parseable row".into()));
    }
    let mut warnings = Vec::new();
    let mut wd = Vec::new();
    let mut jsd_scores = Vec::new();
    let mut singular_jsd = Vec::new();
    for (c, spec) in schema.columns.iter().enumerate() {
        let name = spec.name.clone();
        match (&real_t.columns[c], &synth_t.columns[c]) {
            (ColumnData::Categorical(a), ColumnData::Categorical(b)) => {
                let value = jsd(&histogram(a), &histogram(b))?;
                jsd_scores.push(ColumnScore { column: name, value });
            }
            (ColumnData::Numeric(a), ColumnData::Numeric(b)) => {
                let singular = &spec.singular_values;
                if spec.kind == ColumnKind::Mixed {
                    let value = jsd(
                        &histogram(&singular_indicator(a, singular)),
                        &histogram(&singular_indicator(b, singular)),
                    )?;
                    singular_jsd.push(ColumnScore {
                        column: name.clone(),
                        value,
                    });
                }
                let (ca, cb) = (continuous_part(a, singular), continuous_part(b, singular));
                let value = match (ca.is_empty(), cb.is_empty()) {
                    (false, false) => wd_scaled(&ca, &cb)?,
                    (true, true) => 0.0,
                    _ => {
                        warnings.push(format!(
                            "`{name}`: only one table has continuous values; WD set to 1"
                        ));
                        1.0
                    }
                };
                wd.push(ColumnScore { column: name, value });
            }
            _ => unreachable!("both tables parsed with the same schema"),
        }
    }
    let diff_corr = if schema.columns.len() >= 2 {
        let (v, w) = stats::diff_corr_with_warnings(&real_t, &synth_t)?;
        warnings.extend(w);
        v
    } else {
        0.0
    };
    // A synthetic table too degenerate to train on (e.g. a single target
    // class) is a finding, not a failure of the evaluation.
    let utility = match schema.target_index() {
        Some(target) => {
            let (train, test) = real_t.split(TRAIN_FRACTION, seed)?;
            let result = match schema.columns[target].kind {
                ColumnKind::Categorical => tstr_classify(&train, &test, &synth_t, target),
                _ => tstr_regress(&train, &test, &synth_t, target),
            };
            match result {
                Ok(u) => Some(u),
                Err(Error::Data(msg)) => {
                    warnings.push(format!("utility not evaluated: {msg}"));
                    None
                }
                Err(e) => return Err(e),
            }
        }
        None => None,
    };
    Ok(EvalReport {
        wd,
        jsd: jsd_scores,
        singular_jsd,
        diff_corr,
        utility,
        mia_accuracy: None,
        metadata: EvalMetadata {
            epsilon: None,
            delta: None,
            seed,
            real_rows: real_t.rows,
            synthetic_rows: synth_t.rows,
            dropped_real,
            dropped_synthetic: dropped_synth,
        },
        warnings,
    })
}
