//! Experiment configuration: a single TOML document with one table per
//! concern. Unknown keys are rejected and numeric ranges are validated
//! before anything runs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SyntheticMog,
    SyntheticMos,
    RbmSample,
    RbmLearn,
    TuneOnly,
    OracleSuite,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::SyntheticMog => "synthetic-mog",
            ExperimentKind::SyntheticMos => "synthetic-mos",
            ExperimentKind::RbmSample => "rbm-sample",
            ExperimentKind::RbmLearn => "rbm-learn",
            ExperimentKind::TuneOnly => "tune-only",
            ExperimentKind::OracleSuite => "oracle-suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dula,
    Dmala,
    PtDula,
    PtDmala,
}

impl Algorithm {
    pub fn adjusted(&self) -> bool {
        matches!(self, Algorithm::Dmala | Algorithm::PtDmala)
    }

    pub fn tempered(&self) -> bool {
        matches!(self, Algorithm::PtDula | Algorithm::PtDmala)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Dula => "dula",
            Algorithm::Dmala => "dmala",
            Algorithm::PtDula => "pt-dula",
            Algorithm::PtDmala => "pt-dmala",
        }
    }

    /// Model evaluations charged per chain per step (gradients; energies
    /// match). The accounting behind evaluation-matched comparisons.
    pub fn evals_per_chain_step(&self) -> u64 {
        if self.adjusted() {
            2
        } else {
            1
        }
    }
}

/// Either the literal string `"auto"` or an explicit value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr<T> {
    Tag(String),
    Value(T),
}

impl<T> AutoOr<T> {
    pub fn is_auto(&self) -> bool {
        matches!(self, AutoOr::Tag(s) if s == "auto")
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            AutoOr::Value(v) => Some(v),
            AutoOr::Tag(_) => None,
        }
    }

    fn validate(&self, field: &'static str) -> Result<()> {
        match self {
            AutoOr::Tag(s) if s == "auto" => Ok(()),
            AutoOr::Tag(s) => Err(Error::Config(format!(
                "field `{field}`: expected \"auto\" or a value, got \"{s}\""
            ))),
            AutoOr::Value(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Mixture components (synthetic kinds).
    pub components: Option<usize>,
    pub radius: Option<f64>,
    pub variance: Option<f64>,
    /// Student-t degrees of freedom (synthetic-mos).
    pub dof: Option<f64>,
    pub cells: Option<usize>,
    pub bounds: Option<[f64; 4]>,
    /// RBM parameter file (rbm-sample, rbm-learn).
    pub rbm_file: Option<String>,
    /// IDX dataset (rbm-learn; optional mode-initialization set for
    /// rbm-sample).
    pub dataset: Option<String>,
    pub binarize_threshold: Option<f64>,
    /// Hidden units when training from scratch.
    pub n_hidden: Option<usize>,
    /// Dimension of the random instances (oracle-suite).
    pub dim: Option<usize>,
    /// Number of random instances (oracle-suite).
    pub instances: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub algorithm: Algorithm,
    /// Chain count or "auto" (tempered algorithms only).
    pub chains: Option<AutoOr<usize>>,
    /// Explicit schedule or "auto".
    pub betas: Option<AutoOr<Vec<f64>>>,
    pub alpha: Option<f64>,
    /// Per-chain step sizes; overrides `alpha` when present.
    pub alphas: Option<Vec<f64>>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub swap: SwapConfig,
    #[serde(default)]
    pub minibatch: bool,
    pub batch_size: Option<usize>,
    /// Run the single-chain baseline at a matched evaluation budget.
    #[serde(default = "default_true")]
    pub baseline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapConfig {
    #[default]
    Standard,
    Tailored,
}

impl From<SwapConfig> for crate::tempering::SwapCriterion {
    fn from(value: SwapConfig) -> Self {
        match value {
            SwapConfig::Standard => crate::tempering::SwapCriterion::Standard,
            SwapConfig::Tailored => crate::tempering::SwapCriterion::Tailored,
        }
    }
}

fn default_p() -> f64 {
    2.0
}

fn default_rho() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    pub seeds: Vec<u64>,
    /// Total chain budget; determines the copy count B*.
    pub k_total: Option<usize>,
}

fn default_thinning() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    #[serde(default = "default_pilot_steps")]
    pub pilot_steps: usize,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_beta_min")]
    pub beta_min: f64,
    #[serde(default = "default_initial_chains")]
    pub initial_chains: usize,
}

fn default_pilot_steps() -> usize {
    2000
}
fn default_max_rounds() -> usize {
    8
}
fn default_tol() -> f64 {
    0.05
}
fn default_beta_min() -> f64 {
    0.05
}
fn default_initial_chains() -> usize {
    5
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            pilot_steps: default_pilot_steps(),
            max_rounds: default_max_rounds(),
            tol: default_tol(),
            beta_min: default_beta_min(),
            initial_chains: default_initial_chains(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_mmd_features")]
    pub mmd_features: usize,
    /// Bandwidth or "median" for the median heuristic on the reference set.
    #[serde(default = "default_mmd_sigma")]
    pub mmd_sigma: AutoOr<f64>,
    #[serde(default = "default_mmd_seed")]
    pub mmd_seed: u64,
    #[serde(default = "default_kl_smoothing")]
    pub kl_smoothing: f64,
    #[serde(default = "default_true")]
    pub emc: bool,
    #[serde(default = "default_reference_samples")]
    pub reference_samples: usize,
}

fn default_mmd_features() -> usize {
    crate::metrics::DEFAULT_RFF_FEATURES
}
fn default_mmd_sigma() -> AutoOr<f64> {
    AutoOr::Tag("median".to_string())
}
fn default_mmd_seed() -> u64 {
    17
}
fn default_kl_smoothing() -> f64 {
    0.5
}
fn default_reference_samples() -> usize {
    20_000
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            mmd_features: default_mmd_features(),
            mmd_sigma: default_mmd_sigma(),
            mmd_seed: default_mmd_seed(),
            kl_smoothing: default_kl_smoothing(),
            emc: true,
            reference_samples: default_reference_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_pcd_chains")]
    pub pcd_chains: usize,
    #[serde(default = "default_pcd_steps")]
    pub pcd_steps: usize,
    /// Evaluate log-likelihood every this many epochs (0 = final only).
    #[serde(default)]
    pub eval_every: usize,
    #[serde(default = "default_ais_temps")]
    pub ais_temps: usize,
    #[serde(default = "default_ais_particles")]
    pub ais_particles: usize,
}

fn default_epochs() -> usize {
    10
}
fn default_batch_size() -> usize {
    64
}
fn default_learning_rate() -> f64 {
    0.001
}
fn default_pcd_chains() -> usize {
    32
}
fn default_pcd_steps() -> usize {
    5
}
fn default_ais_temps() -> usize {
    10_000
}
fn default_ais_particles() -> usize {
    100
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            pcd_chains: default_pcd_chains(),
            pcd_steps: default_pcd_steps(),
            eval_every: 0,
            ais_temps: default_ais_temps(),
            ais_particles: default_ais_particles(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "empty_model")]
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub learn: LearnConfig,
    pub output: OutputConfig,
}

fn empty_model() -> ModelConfig {
    ModelConfig {
        components: None,
        radius: None,
        variance: None,
        dof: None,
        cells: None,
        bounds: None,
        rbm_file: None,
        dataset: None,
        binarize_threshold: None,
        n_hidden: None,
        dim: None,
        instances: None,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sampler;
        if let Some(chains) = &s.chains {
            chains.validate("sampler.chains")?;
        }
        if let Some(betas) = &s.betas {
            betas.validate("sampler.betas")?;
        }
        if let AutoOr::Tag(tag) = &self.metrics.mmd_sigma {
            if tag != "median" && tag != "auto" {
                return Err(Error::Config(format!(
                    "field `metrics.mmd_sigma`: expected \"median\" or a number, got \"{tag}\""
                )));
            }
        }
        let chains_auto = s.chains.as_ref().map(|c| c.is_auto()).unwrap_or(false);
        let betas_explicit = s
            .betas
            .as_ref()
            .map(|b| b.value().is_some())
            .unwrap_or(false);
        if chains_auto && betas_explicit {
            return Err(Error::Config(
                "`sampler.chains = \"auto\"` and an explicit `sampler.betas` are mutually \
                 exclusive"
                    .to_string(),
            ));
        }
        if let Some(alpha) = s.alpha {
            if !(alpha > 0.0) {
                return Err(Error::Config(format!(
                    "field `alpha`: step size must be positive, got {alpha}"
                )));
            }
        }
        if let Some(alphas) = &s.alphas {
            if alphas.iter().any(|a| !(*a > 0.0)) {
                return Err(Error::Config(
                    "field `alpha`: every per-chain step size must be positive".to_string(),
                ));
            }
        }
        if s.alpha.is_none() && s.alphas.is_none() {
            return Err(Error::Config(
                "field `alpha`: a step size is required".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&s.rho) {
            return Err(Error::Config(format!(
                "field `rho`: swap intensity must lie in [0, 1], got {}",
                s.rho
            )));
        }
        if !(s.p >= 1.0) {
            return Err(Error::Config(format!(
                "field `p`: norm exponent must be at least 1, got {}",
                s.p
            )));
        }
        if let Some(betas) = s.betas.as_ref().and_then(|b| b.value()) {
            crate::tempering::validate_schedule(betas)
                .map_err(|e| Error::Config(format!("field `betas`: {e}")))?;
        }
        if s.minibatch && s.batch_size.is_none() {
            return Err(Error::Config(
                "field `batch_size`: required when `minibatch = true`".to_string(),
            ));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config(
                "field `run.seeds`: at least one seed is required".to_string(),
            ));
        }
        if self.run.steps == 0 {
            return Err(Error::Config(
                "field `run.steps`: must be positive".to_string(),
            ));
        }
        if self.run.thinning == 0 {
            return Err(Error::Config(
                "field `run.thinning`: must be positive".to_string(),
            ));
        }
        if !(self.metrics.kl_smoothing >= 0.0) {
            return Err(Error::Config(
                "field `metrics.kl_smoothing`: must be nonnegative".to_string(),
            ));
        }
        match self.kind {
            ExperimentKind::SyntheticMog | ExperimentKind::SyntheticMos => {
                if self.model.components.unwrap_or(0) == 0 {
                    return Err(Error::Config(
                        "field `model.components`: synthetic kinds need a component count"
                            .to_string(),
                    ));
                }
                if self.kind == ExperimentKind::SyntheticMos && self.model.dof.is_none() {
                    return Err(Error::Config(
                        "field `model.dof`: synthetic-mos needs degrees of freedom".to_string(),
                    ));
                }
            }
            ExperimentKind::RbmSample => {
                if self.model.rbm_file.is_none() {
                    return Err(Error::Config(
                        "field `model.rbm_file`: rbm-sample needs a parameter file".to_string(),
                    ));
                }
            }
            ExperimentKind::RbmLearn => {
                if self.model.dataset.is_none() {
                    return Err(Error::Config(
                        "field `model.dataset`: rbm-learn needs a dataset".to_string(),
                    ));
                }
                if self.model.rbm_file.is_none() && self.model.n_hidden.is_none() {
                    return Err(Error::Config(
                        "field `model.n_hidden`: rbm-learn needs an initial model or a hidden \
                         unit count"
                            .to_string(),
                    ));
                }
            }
            ExperimentKind::TuneOnly | ExperimentKind::OracleSuite => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
kind = "synthetic-mog"

[model]
components = 4

[sampler]
algorithm = "pt-dmala"
betas = [1.0, 0.6, 0.3]
alpha = 0.2

[run]
steps = 100
seeds = [0]

[output]
directory = "out"
"#;

    #[test]
    fn minimal_config_round_trips() {
        let config = ExperimentConfig::from_toml_str(MINIMAL, "test").unwrap();
        let text = config.to_toml_string();
        let reloaded = ExperimentConfig::from_toml_str(&text, "round-trip").unwrap();
        assert_eq!(config, reloaded);
    }

    #[test]
    fn auto_chains_with_explicit_betas_rejected() {
        let text = MINIMAL.replace(
            "betas = [1.0, 0.6, 0.3]",
            "chains = \"auto\"\nbetas = [1.0, 0.6, 0.3]",
        );
        let err = ExperimentConfig::from_toml_str(&text, "test").unwrap_err();
        assert!(err.to_string().contains("mutually exclusive"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn negative_alpha_names_the_field() {
        let text = MINIMAL.replace("alpha = 0.2", "alpha = -0.5");
        let err = ExperimentConfig::from_toml_str(&text, "test").unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("alpha = 0.2", "alpha = 0.2\nwarp_factor = 9");
        let err = ExperimentConfig::from_toml_str(&text, "test").unwrap_err();
        assert!(err.to_string().contains("warp_factor"), "{err}");
    }

    #[test]
    fn invalid_auto_tag_rejected() {
        let text = MINIMAL.replace("betas = [1.0, 0.6, 0.3]", "betas = \"automatic\"");
        let err = ExperimentConfig::from_toml_str(&text, "test").unwrap_err();
        assert!(err.to_string().contains("betas"), "{err}");
    }
}
