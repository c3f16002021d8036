//! Boundary-gradient sanitization and Rényi-DP accounting.
//!
//! The sanitizer clips the whole gradient arriving at the generator output
//! to norm `C/B` and adds Gaussian noise with standard deviation `σ·C/B`.
//! Each generator update sanitized this way is `(λ, 2Bλ/σ²)`-RDP; updates
//! compose additively and the total converts to `(ε, δ)`-DP through
//! `ε = ε_RDP(λ) + ln(1/δ)/(λ − 1)`, minimized over an integer order grid.
//!
//! Note: some literature states RDP with a non-standard divergence form;
//! the accounting here uses the standard Rényi divergence of order λ.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fill_standard_normal;
use crate::tensor::Tensor;

pub const DEFAULT_DELTA: f64 = 1e-5;
/// Lower bound on the norm used as divisor, so a zero gradient stays zero.
pub const NORM_FLOOR: f64 = 1e-10;
/// Largest noise multiplier `calibrate_sigma` will consider.
pub const MAX_SIGMA: f64 = 1e6;

pub fn default_lambda_grid() -> Vec<u32> {
    (2..=128).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanitizerConfig {
    /// Clip norm `C`; `f64::INFINITY` disables clipping.
    pub clip: f64,
    /// Batch size `B`.
    pub batch: usize,
    /// Noise multiplier `σ`; zero means no noise and no privacy.
    pub sigma: f64,
}

impl SanitizerConfig {
    pub fn new(clip: f64, batch: usize, sigma: f64) -> Result<Self> {
        if clip.is_nan() || clip <= 0.0 {
            return Err(Error::Config(format!("clip norm must be positive, got {clip}")));
        }
        if batch == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise multiplier must be finite and non-negative, got {sigma}"
            )));
        }
        if clip.is_infinite() && sigma > 0.0 {
            return Err(Error::Config(
                "unbounded clip norm cannot be combined with noise".into(),
            ));
        }
        Ok(Self { clip, batch, sigma })
    }

    /// `C / B`, the per-batch sensitivity bound.
    pub fn bound(&self) -> f64 {
        self.clip / self.batch as f64
    }

    pub fn is_private(&self) -> bool {
        self.sigma > 0.0
    }
}

/// Clips `g_in` (as one flattened vector) to norm `C/B` and adds
/// `N(0, (σ·C/B)²)` noise to every coordinate.
pub fn sanitize<R: Rng + ?Sized>(
    g_in: &Tensor,
    config: &SanitizerConfig,
    rng: &mut R,
) -> Result<Tensor> {
    g_in.ensure_finite("sanitizer input")?;
    let bound = config.bound();
    let coef = (bound / g_in.norm().max(NORM_FLOOR)).min(1.0);
    let mut out = g_in.clone();
    out.scale(coef);
    if config.sigma > 0.0 {
        let scale = bound * config.sigma;
        let mut noise = vec![0.0; out.data().len()];
        fill_standard_normal(rng, &mut noise);
        for (o, n) in out.data_mut().iter_mut().zip(noise) {
            *o += scale * n;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub config: SanitizerConfig,
    /// Number of sanitized generator updates so far.
    pub steps: u64,
    pub lambda_grid: Vec<u32>,
    pub delta: f64,
}

impl PrivacyLedger {
    pub fn new(config: SanitizerConfig, lambda_grid: Vec<u32>, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
        }
        if let Some(bad) = lambda_grid.iter().find(|&&l| l < 2) {
            return Err(Error::Config(format!("RDP orders must be >= 2, got {bad}")));
        }
        Ok(Self {
            config,
            steps: 0,
            lambda_grid,
            delta,
        })
    }

    pub fn with_steps(mut self, steps: u64) -> Self {
        self.steps = steps;
        self
    }

    /// Accounts for one sanitized generator update.
    pub fn record_update(&mut self) -> Result<()> {
        if !self.config.is_private() {
            return Err(Error::Privacy(
                "cannot account a non-private run (sigma = 0)".into(),
            ));
        }
        self.steps += 1;
        Ok(())
    }

    /// RDP of a single update at order `lambda`: `2Bλ/σ²`.
    pub fn rdp_per_update(&self, lambda: f64) -> f64 {
        2.0 * self.config.batch as f64 * lambda / (self.config.sigma * self.config.sigma)
    }

    /// Returns `(ε, λ*)` for the ledger's `δ`; ties keep the smallest order.
    pub fn epsilon(&self) -> Result<(f64, u32)> {
        if !self.config.is_private() {
            return Err(Error::Privacy("epsilon is unbounded for sigma = 0".into()));
        }
        let log_inv_delta = (1.0 / self.delta).ln();
        let mut best: Option<(f64, u32)> = None;
        for &lambda in &self.lambda_grid {
            let l = f64::from(lambda);
            let eps = self.steps as f64 * self.rdp_per_update(l) + log_inv_delta / (l - 1.0);
            if best.is_none_or(|(b, _)| eps < b) {
                best = Some((eps, lambda));
            }
        }
        best.ok_or_else(|| Error::Privacy("empty RDP order grid".into()))
    }
}

/// Smallest noise multiplier (to 1e-4 relative) whose ledger after `steps`
/// updates reports `ε ≤ target_epsilon`.
pub fn calibrate_sigma(
    target_epsilon: f64,
    delta: f64,
    steps: u64,
    batch: usize,
    lambda_grid: &[u32],
) -> Result<f64> {
    if !(target_epsilon > 0.0) {
        return Err(Error::Config(format!(
            "target epsilon must be positive, got {target_epsilon}"
        )));
    }
    let eps_at = |sigma: f64| -> Result<f64> {
        let cfg = SanitizerConfig::new(1.0, batch, sigma)?;
        let ledger = PrivacyLedger::new(cfg, lambda_grid.to_vec(), delta)?.with_steps(steps);
        Ok(ledger.epsilon()?.0)
    };
    if eps_at(MAX_SIGMA)? > target_epsilon {
        return Err(Error::Privacy(format!(
            "target epsilon {target_epsilon} is unreachable with sigma <= {MAX_SIGMA}"
        )));
    }
    let mut hi = MAX_SIGMA;
    let mut lo = 1e-6;
    if eps_at(lo)? <= target_epsilon {
        return Ok(lo);
    }
    // Invariant: eps(lo) > target >= eps(hi). Bisect geometrically.
    while hi / lo > 1.0 + 1e-4 {
        let mid = (lo * hi).sqrt();
        if eps_at(mid)? <= target_epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
