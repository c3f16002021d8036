//! Column-wise distances and the association-matrix difference.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{ColumnData, ParsedTable};

/// 1-Wasserstein distance between two empirical distributions, integrating
/// the absolute difference of their quantile functions. No rescaling.
pub fn wd_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("wasserstein distance needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("wasserstein input".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < n && j < m {
        // Compare (i+1)/n with (j+1)/m exactly in integers.
        let lhs = (i + 1) * m;
        let rhs = (j + 1) * n;
        let next = if lhs <= rhs {
            (i + 1) as f64 / n as f64
        } else {
            (j + 1) as f64 / m as f64
        };
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        if lhs <= rhs {
            i += 1;
        }
        if rhs <= lhs {
            j += 1;
        }
    }
    Ok(total)
}

/// [`wd_1d`] after min-max scaling both samples jointly onto `[0, 1]`.
pub fn wd_scaled(a: &[f64], b: &[f64]) -> Result<f64> {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return wd_1d(a, b);
    }
    let scale = |v: &[f64]| v.iter().map(|x| (x - lo) / (hi - lo)).collect::<Vec<_>>();
    wd_1d(&scale(a), &scale(b))
}

/// Base-2 Jensen-Shannon divergence between two count histograms over the
/// union of their supports.
pub fn jsd(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> Result<f64> {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return Err(Error::Data("jensen-shannon divergence needs two non-empty histograms".into()));
    }
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let term = |p: f64, m: f64| if p > 0.0 { p * (p / m).log2() } else { 0.0 };
    let mut total = 0.0;
    for k in keys {
        let p = a.get(k).copied().unwrap_or(0) as f64 / na as f64;
        let q = b.get(k).copied().unwrap_or(0) as f64 / nb as f64;
        let m = 0.5 * (p + q);
        total += 0.5 * (term(p, m) + term(q, m));
    }
    Ok(total.clamp(0.0, 1.0))
}

pub fn histogram<S: AsRef<str>>(values: &[S]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for v in values {
        *out.entry(v.as_ref().to_string()).or_insert(0) += 1;
    }
    out
}

/// Frobenius norm of the off-diagonal difference between the two tables'
/// association matrices.
pub fn diff_corr(real: &ParsedTable, synth: &ParsedTable) -> Result<f64> {
    diff_corr_with_warnings(real, synth).map(|(v, _)| v)
}

pub(crate) fn diff_corr_with_warnings(
    real: &ParsedTable,
    synth: &ParsedTable,
) -> Result<(f64, Vec<String>)> {
    if real.columns.len() < 2 || real.columns.len() != synth.columns.len() {
        return Err(Error::Data(
            "correlation difference needs two tables with the same two or more columns".into(),
        ));
    }
    let mut warnings = Vec::new();
    let a = association_matrix(real, "real", &mut warnings)?;
    let b = association_matrix(synth, "synthetic", &mut warnings)?;
    let d = a.len();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                total += (a[i][j] - b[i][j]).powi(2);
            }
        }
    }
    Ok((total.sqrt(), warnings))
}

/// Pearson for numeric pairs, Cramér's V for categorical pairs and the
/// correlation ratio for mixed pairs. Unit diagonal.
pub fn association_matrix(
    table: &ParsedTable,
    label: &str,
    warnings: &mut Vec<String>,
) -> Result<Vec<Vec<f64>>> {
    let d = table.columns.len();
    let mut out = vec![vec![0.0; d]; d];
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let v = match (&table.columns[i], &table.columns[j]) {
                (ColumnData::Numeric(x), ColumnData::Numeric(y)) => match pearson(x, y) {
                    Some(r) => r,
                    None => {
                        warnings.push(format!(
                            "{label}: constant column among `{}`/`{}`; Pearson set to 0",
                            table.names[i], table.names[j]
                        ));
                        0.0
                    }
                },
                (ColumnData::Categorical(x), ColumnData::Categorical(y)) => cramers_v(x, y),
                (ColumnData::Categorical(c), ColumnData::Numeric(y))
                | (ColumnData::Numeric(y), ColumnData::Categorical(c)) => correlation_ratio(c, y),
            };
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// `None` when either column is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn cramers_v<S: AsRef<str>>(x: &[S], y: &[S]) -> f64 {
    let n = x.len() as f64;
    let rows = histogram(x);
    let cols = histogram(y);
    let k = rows.len().min(cols.len());
    if k < 2 || n == 0.0 {
        return 0.0;
    }
    let mut joint: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for (a, b) in x.iter().zip(y) {
        *joint.entry((a.as_ref(), b.as_ref())).or_insert(0) += 1;
    }
    let mut chi2 = 0.0;
    for (r, &nr) in &rows {
        for (c, &nc) in &cols {
            let expected = nr as f64 * nc as f64 / n;
            let observed = joint.get(&(r.as_str(), c.as_str())).copied().unwrap_or(0) as f64;
            chi2 += (observed - expected).powi(2) / expected;
        }
    }
    (chi2 / (n * (k - 1) as f64)).sqrt().clamp(0.0, 1.0)
}

/// η: share of the numeric column's spread explained by the categories.
pub fn correlation_ratio<S: AsRef<str>>(categories: &[S], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let total: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut groups: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (c, v) in categories.iter().zip(y) {
        let g = groups.entry(c.as_ref()).or_insert((0.0, 0.0));
        g.0 += v;
        g.1 += 1.0;
    }
    let between: f64 = groups
        .values()
        .map(|(sum, count)| count * (sum / count - mean).powi(2))
        .sum();
    (between / total).sqrt().clamp(0.0, 1.0)
}
