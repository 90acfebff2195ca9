use std::path::Path;

use ruelle::apriori::AprioriSpec;
use ruelle::gibbs::GibbsConfig;
use ruelle::potential::PotentialSpec;
use ruelle::transfer::EigenConfig;
use ruelle::{SpaceKind, WeightSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_space")]
    pub space: SpaceKind,
    pub weights: WeightSpec,
    pub apriori: AprioriSpec,
    /// Defaults to the zero potential.
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    /// Skip the eigen solve and sample with the potential as given.
    #[serde(default)]
    pub assume_normalized: bool,
    #[serde(default)]
    pub solver: EigenConfig,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub contract: ContractConfig,
    #[serde(default)]
    pub tails: TailsConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_space() -> SpaceKind {
    SpaceKind::Lp { p: 2.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

/// `"auto"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scale {
    Fixed(f64),
    Named(AutoTag),
}

impl Default for Scale {
    fn default() -> Self {
        Scale::Named(AutoTag::Auto)
    }
}

impl Scale {
    pub fn fixed(self) -> Option<f64> {
        match self {
            Scale::Fixed(a) => Some(a),
            Scale::Named(AutoTag::Auto) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    #[serde(default)]
    pub a: Scale,
    #[serde(default = "one")]
    pub alpha: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            a: Scale::default(),
            alpha: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            horizon: default_horizon(),
        }
    }
}

fn default_horizon() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    #[serde(default)]
    pub local: Vec<PairSpec>,
    #[serde(default)]
    pub global: Vec<PairSpec>,
    #[serde(default = "default_contract_particles")]
    pub particles: usize,
    /// Declared `Lip_{Ā, D^α}`; derived from the potential when absent.
    #[serde(default)]
    pub lip_abar: Option<f64>,
}

impl Default for ContractConfig {
    fn default() -> Self {
        ContractConfig {
            local: vec![],
            global: vec![],
            particles: default_contract_particles(),
            lip_abar: None,
        }
    }
}

fn default_contract_particles() -> usize {
    400
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_tails_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub ts: Vec<f64>,
}

impl Default for TailsConfig {
    fn default() -> Self {
        TailsConfig {
            epsilon: default_epsilon(),
            horizon: default_tails_horizon(),
            gamma: None,
            n: default_n(),
            ts: vec![],
        }
    }
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_tails_horizon() -> usize {
    60
}

fn default_n() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    /// Subset of `json`, `jsonl`, `bin`; reports are always JSON.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: default_formats(),
        }
    }
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "jsonl".into(), "bin".into()]
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

/// Parsed config plus the SHA-256 of its bytes.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub sha256: String,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::ConfigInvalid {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    validate(&config)?;
    Ok(Loaded { config, sha256 })
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        path: path.into(),
        message: message.into(),
    }
}

fn validate(c: &ExperimentConfig) -> Result<(), CliError> {
    if let SpaceKind::Lp { p } = c.space {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(invalid("space.p", "must be a finite number ≥ 1"));
        }
    }
    if !(c.metric.alpha > 0.0 && c.metric.alpha <= 1.0) {
        return Err(invalid("metric.alpha", "must lie in (0, 1]"));
    }
    if let Some(a) = c.metric.a.fixed() {
        if !(a > 0.0) {
            return Err(invalid("metric.a", "must be positive or \"auto\""));
        }
    }
    if c.gibbs.particles == 0 {
        return Err(invalid("gibbs.particles", "must be positive"));
    }
    if c.gibbs.candidates == 0 {
        return Err(invalid("gibbs.candidates", "must be at least 1"));
    }
    if !(c.tails.epsilon > 0.0) {
        return Err(invalid("tails.epsilon", "must be positive"));
    }
    for (name, pairs) in [("contract.local", &c.contract.local), ("contract.global", &c.contract.global)] {
        if let Some(i) = pairs.iter().position(|p| p.n == 0) {
            return Err(invalid(&format!("{name}[{i}].n"), "must be at least 1"));
        }
    }
    Ok(())
}
