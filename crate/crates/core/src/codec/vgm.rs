//! Per-column variational Gaussian mixtures and mode-specific normalization.
//!
//! Mixtures of every size up to the mode cap are fitted by EM from k-means++
//! seeds and the size with the lowest BIC is kept. Components whose weight
//! falls below [`PRUNE_WEIGHT`] are then dropped and the rest renormalized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

pub const PRUNE_WEIGHT: f64 = 0.005;
pub const MIN_STD: f64 = 1e-6;
pub const DEFAULT_MAX_MODES: usize = 10;
/// Absolute tolerance when matching a value to a singular mode.
pub const SINGULAR_TOL: f64 = 1e-9;

const MAX_ITER: usize = 300;
/// EM stops once the per-sample log-likelihood gain falls below this.
const TOL: f64 = 1e-8;
const TAU: f64 = std::f64::consts::TAU;
const KMEANS_ITER: usize = 20;
const REG_VAR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VgmModel {
    /// Point masses; occupy the first mode indices.
    pub singular_modes: Vec<f64>,
    /// Gaussian component weights, summing to one.
    pub weights: Vec<f64>,
    /// Ascending.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl VgmModel {
    /// A model with explicit components; sorts Gaussian modes by mean.
    pub fn new(
        singular_modes: Vec<f64>,
        weights: Vec<f64>,
        means: Vec<f64>,
        stds: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != means.len() || means.len() != stds.len() {
            return Err(Error::Shape("vgm: component arrays differ in length".into()));
        }
        let mut comps: Vec<(f64, f64, f64)> = means
            .into_iter()
            .zip(weights)
            .zip(stds)
            .map(|((m, w), s)| (m, w, s.max(MIN_STD)))
            .collect();
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = comps.iter().map(|c| c.1).sum();
        if !comps.is_empty() && !(total > 0.0) {
            return Err(Error::Data("vgm: weights must have positive mass".into()));
        }
        Ok(Self {
            singular_modes,
            weights: comps.iter().map(|c| c.1 / total).collect(),
            means: comps.iter().map(|c| c.0).collect(),
            stds: comps.iter().map(|c| c.2).collect(),
        })
    }

    pub fn mode_count(&self) -> usize {
        self.singular_modes.len() + self.means.len()
    }

    pub fn gaussian_count(&self) -> usize {
        self.means.len()
    }

    /// Index of the singular mode matching `tau`, if any.
    pub fn singular_index(&self, tau: f64) -> Option<usize> {
        self.singular_modes
            .iter()
            .position(|s| (s - tau).abs() <= SINGULAR_TOL)
    }

    /// Mode index of `tau`: its singular mode, else the Gaussian component
    /// maximizing `ω_k·N(τ; μ_k, σ_k)` (lowest index on ties).
    pub fn select_mode(&self, tau: f64) -> Option<usize> {
        if let Some(i) = self.singular_index(tau) {
            return Some(i);
        }
        let mut best: Option<(f64, usize)> = None;
        for k in 0..self.means.len() {
            let z = (tau - self.means[k]) / self.stds[k];
            let score = self.weights[k].ln() - self.stds[k].ln() - 0.5 * z * z;
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, k));
            }
        }
        best.map(|(_, k)| self.singular_modes.len() + k)
    }
}

/// Normalizes `tau` against its selected mode.
///
/// Returns `(α, mode)` where `mode` indexes the one-hot β. Singular modes
/// have α = 0; Gaussian mode k has `α = clamp((τ − μ_k)/(4σ_k), −1, 1)`.
pub fn encode_value(tau: f64, model: &VgmModel) -> Result<(f64, usize)> {
    let mode = model
        .select_mode(tau)
        .ok_or_else(|| Error::Data("cannot encode against a model with no modes".into()))?;
    let s = model.singular_modes.len();
    if mode < s {
        return Ok((0.0, mode));
    }
    let k = mode - s;
    let alpha = ((tau - model.means[k]) / (4.0 * model.stds[k])).clamp(-1.0, 1.0);
    Ok((alpha, mode))
}

/// Inverse of [`encode_value`] for a hard mode index.
pub fn decode_value(alpha: f64, mode: usize, model: &VgmModel) -> Result<f64> {
    let s = model.singular_modes.len();
    if mode < s {
        return Ok(model.singular_modes[mode]);
    }
    let k = mode - s;
    if k >= model.means.len() {
        return Err(Error::Data(format!(
            "mode {mode} out of range for a model with {} modes",
            model.mode_count()
        )));
    }
    Ok(4.0 * model.stds[k] * alpha + model.means[k])
}

/// Reads the selected mode out of a one-hot β. Rejects anything that is not
/// exactly one 1 among 0s.
pub fn mode_from_one_hot(beta: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (i, &b) in beta.iter().enumerate() {
        if b == 1.0 {
            if hot.is_some() {
                return Err(Error::Data("one-hot has several active entries".into()));
            }
            hot = Some(i);
        } else if b != 0.0 {
            return Err(Error::Data(format!("one-hot entry {b} is neither 0 nor 1")));
        }
    }
    hot.ok_or_else(|| Error::Data("one-hot has no active entry".into()))
}

/// Fits a Gaussian mixture with at most `max_modes` components.
///
/// `values` must exclude singular values. Deterministic given `seed`.
pub fn fit_vgm(values: &[f64], max_modes: usize, seed: u64) -> Result<VgmModel> {
    fit_vgm_named(values, max_modes, seed, "<unnamed>")
}

pub(crate) fn fit_vgm_named(
    values: &[f64],
    max_modes: usize,
    seed: u64,
    column: &str,
) -> Result<VgmModel> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("values of column `{column}`")));
    }
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateColumn(column.to_string()));
    }
    let k_max = max_modes.max(1).min(distinct.len());
    let mut rng = seeded(seed);
    let mut best: Option<(f64, Mixture)> = None;
    for k in 1..=k_max {
        let fit = fit_em(values, k, &mut rng);
        let bic = fit.bic(values.len());
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, fit));
        }
    }
    let (_, mix) = best.expect("at least one candidate size");

    let mut keep_w = Vec::new();
    let mut keep_m = Vec::new();
    let mut keep_s = Vec::new();
    for j in 0..mix.weights.len() {
        if mix.weights[j] >= PRUNE_WEIGHT {
            keep_w.push(mix.weights[j]);
            keep_m.push(mix.means[j]);
            keep_s.push(mix.variances[j].sqrt());
        }
    }
    VgmModel::new(Vec::new(), keep_w, keep_m, keep_s)
}

struct Mixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    log_likelihood: f64,
}

impl Mixture {
    /// Bayesian information criterion; lower is better.
    fn bic(&self, n: usize) -> f64 {
        let free = 3 * self.weights.len() - 1;
        free as f64 * (n as f64).ln() - 2.0 * self.log_likelihood
    }
}

/// Maximum-likelihood EM for a `k`-component mixture from k-means++ seeds.
fn fit_em<R: Rng>(values: &[f64], k: usize, rng: &mut R) -> Mixture {
    let n = values.len();
    let mut resp = kmeans_responsibilities(values, k, rng);
    let mut mix = m_step(values, &resp, k);
    let mut log_p = vec![0.0; k];
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..MAX_ITER {
        let terms: Vec<(f64, f64, f64)> = (0..k)
            .map(|j| {
                let log_norm = mix.weights[j].ln() - 0.5 * (TAU * mix.variances[j]).ln();
                (log_norm, mix.means[j], 0.5 / mix.variances[j])
            })
            .collect();
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            for (l, &(c, mu, h)) in log_p.iter_mut().zip(&terms) {
                *l = c - h * (x - mu) * (x - mu);
            }
            let m = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = log_p.iter().map(|l| (l - m).exp()).sum();
            ll += m + z.ln();
            for (r, l) in resp[i * k..(i + 1) * k].iter_mut().zip(&log_p) {
                *r = (l - m).exp() / z;
            }
        }
        mix = m_step(values, &resp, k);
        mix.log_likelihood = ll;
        if (ll - prev).abs() <= TOL * n as f64 {
            break;
        }
        prev = ll;
    }
    mix
}

fn m_step(values: &[f64], resp: &[f64], k: usize) -> Mixture {
    let n = values.len() as f64;
    let tiny = 10.0 * f64::EPSILON;
    let mut nk = vec![tiny; k];
    let mut means = vec![0.0; k];
    for (i, &x) in values.iter().enumerate() {
        for j in 0..k {
            let r = resp[i * k + j];
            nk[j] += r;
            means[j] += r * x;
        }
    }
    for j in 0..k {
        means[j] /= nk[j];
    }
    let mut variances = vec![0.0; k];
    for (i, &x) in values.iter().enumerate() {
        for j in 0..k {
            variances[j] += resp[i * k + j] * (x - means[j]).powi(2);
        }
    }
    for j in 0..k {
        variances[j] = (variances[j] / nk[j] + REG_VAR).max(MIN_STD * MIN_STD);
    }
    Mixture {
        weights: nk.iter().map(|w| w / n).collect(),
        means,
        variances,
        log_likelihood: f64::NEG_INFINITY,
    }
}

/// Hard k-means (k-means++ seeding) assignments as initial responsibilities.
fn kmeans_responsibilities<R: Rng>(values: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let n = values.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(values[rng.gen_range(0..n)]);
    let mut d2: Vec<f64> = values.iter().map(|v| (v - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            values[pick]
        } else {
            values[rng.gen_range(0..n)]
        };
        centers.push(next);
        for (d, v) in d2.iter_mut().zip(values) {
            *d = d.min((v - next).powi(2));
        }
    }
    let mut assign = vec![0usize; n];
    for _ in 0..KMEANS_ITER {
        for (a, v) in assign.iter_mut().zip(values) {
            *a = nearest(&centers, *v);
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (a, v) in assign.iter().zip(values) {
            sums[*a] += v;
            counts[*a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] / counts[j] as f64;
            }
        }
    }
    let mut resp = vec![0.0; n * k];
    for (i, v) in values.iter().enumerate() {
        resp[i * k + nearest(&centers, *v)] = 1.0;
    }
    resp
}

fn nearest(centers: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (j, c) in centers.iter().enumerate() {
        if (v - c).abs() < (v - centers[best]).abs() {
            best = j;
        }
    }
    best
}
