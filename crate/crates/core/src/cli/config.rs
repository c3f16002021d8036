//! The JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::TableSchema;
use crate::error::{Error, Result};
use crate::gan::Hyper;
use crate::privacy::{calibrate_sigma, default_lambda_grid, DEFAULT_DELTA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: TableSchema,
    #[serde(default)]
    pub hyper: TrainingConfig,
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub io: IoConfig,
    /// Required: a run never falls back to unseeded randomness silently.
    pub seed: u64,
}

/// Architecture and optimizer settings; privacy settings live in
/// [`PrivacyConfig`] and the seed at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub z_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub aux_hidden: Vec<usize>,
    pub batch: usize,
    pub steps: u64,
    pub aux_weight: f64,
    pub attention: bool,
    pub token_width: usize,
    pub max_modes: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub leak: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let h = Hyper::default();
        Self {
            z_dim: h.z_dim,
            gen_hidden: h.gen_hidden,
            disc_hidden: h.disc_hidden,
            aux_hidden: h.aux_hidden,
            batch: h.batch,
            steps: h.steps,
            aux_weight: h.aux_weight,
            attention: h.attention,
            token_width: h.token_width,
            max_modes: h.max_modes,
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            leak: h.leak,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    /// Noise multiplier; exactly one of this and `target_epsilon`.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Calibrate σ so the finished run reports at most this ε.
    #[serde(default)]
    pub target_epsilon: Option<f64>,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<u32>,
}

fn default_clip() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Real training table.
    pub input: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Synthetic table: written by `sample`, read by `evaluate`/`attack`.
    pub synthetic: Option<PathBuf>,
    /// Where `evaluate` writes its report; stdout otherwise.
    pub report: Option<PathBuf>,
    pub members: Option<PathBuf>,
    pub nonmembers: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        match (self.privacy.sigma, self.privacy.target_epsilon) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(Error::Config(
                    "privacy needs exactly one of `sigma` and `target_epsilon`".into(),
                ))
            }
        }
        let io = &self.io;
        let paths = [
            &io.input,
            &io.checkpoint,
            &io.synthetic,
            &io.report,
            &io.members,
            &io.nonmembers,
        ];
        if paths.iter().any(|p| p.as_ref().is_some_and(|p| p.as_os_str().is_empty())) {
            return Err(Error::Config("io paths must be non-empty".into()));
        }
        Ok(())
    }

    /// The noise multiplier, calibrated when a target ε is configured.
    pub fn resolve_sigma(&self) -> Result<f64> {
        match (self.privacy.sigma, self.privacy.target_epsilon) {
            (Some(s), None) => Ok(s),
            (None, Some(eps)) => calibrate_sigma(
                eps,
                self.privacy.delta,
                self.hyper.steps,
                self.hyper.batch,
                &self.privacy.lambda_grid,
            ),
            _ => Err(Error::Config(
                "privacy needs exactly one of `sigma` and `target_epsilon`".into(),
            )),
        }
    }

    pub fn to_hyper(&self, seed: u64) -> Result<Hyper> {
        let t = &self.hyper;
        let hyper = Hyper {
            z_dim: t.z_dim,
            gen_hidden: t.gen_hidden.clone(),
            disc_hidden: t.disc_hidden.clone(),
            aux_hidden: t.aux_hidden.clone(),
            batch: t.batch,
            steps: t.steps,
            sigma: self.resolve_sigma()?,
            clip: self.privacy.clip,
            lambda_grid: self.privacy.lambda_grid.clone(),
            delta: self.privacy.delta,
            seed,
            aux_weight: t.aux_weight,
            attention: t.attention,
            token_width: t.token_width,
            max_modes: t.max_modes,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            leak: t.leak,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("config is missing `io.{key}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schema": {"columns": [{"name": "x", "kind": "continuous"}]},
        "privacy": {"sigma": 0.0},
        "seed": 3
    }"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::parse(BASE).unwrap();
        assert_eq!(cfg.hyper, TrainingConfig::default());
        let h = cfg.to_hyper(cfg.seed).unwrap();
        assert_eq!(h.seed, 3);
        assert_eq!(h.sigma, 0.0);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let text = BASE.replace(r#","seed": 3"#, "").replace("\"seed\": 3", "\"io\": {}");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = BASE.replace("\"sigma\": 0.0", "\"sigma\": 0.0, \"sigam\": 1.0");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn sigma_and_target_are_exclusive() {
        let both = BASE.replace("\"sigma\": 0.0", "\"sigma\": 1.0, \"target_epsilon\": 1.0");
        assert!(RunConfig::parse(&both).is_err());
        let neither = BASE.replace("\"sigma\": 0.0", "");
        assert!(RunConfig::parse(&neither).is_err());
    }

    #[test]
    fn target_epsilon_is_calibrated() {
        let text = BASE.replace("\"sigma\": 0.0", "\"target_epsilon\": 2.0");
        let cfg = RunConfig::parse(&text).unwrap();
        let h = cfg.to_hyper(0).unwrap();
        let (eps, _) = h.new_ledger().unwrap().with_steps(h.steps).epsilon().unwrap();
        assert!(eps <= 2.0 && eps > 1.99, "{eps}");
    }
}
