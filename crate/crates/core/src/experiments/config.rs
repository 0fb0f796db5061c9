use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::concentration::{Branch, SamplingPlan};
use crate::error::{Error, Result};
use crate::hypothesis::{CoverStrategy, EpsSchedule};
use crate::model::HmmSpec;
use crate::posterior::{McmcConfig, PriorSpec};

/// One experiment: a model, a true parameter and a block per subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: u64,
    /// Inline model; exclusive with `model_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<HmmSpec>,
    /// Model TOML relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    pub theta0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<TestsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub n_grid: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsBlock {
    /// Defaults to countable for discrete emissions, continuous otherwise.
    #[serde(default)]
    pub branch: Option<Branch>,
    /// Emission T1 constant; required for Poisson emissions on the
    /// continuous branch.
    #[serde(default)]
    pub c_y: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub sampling: SamplingPlan,
    #[serde(default)]
    pub tail: Option<TailBlock>,
}

fn default_horizon() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailBlock {
    pub n: usize,
    pub replicates: usize,
    pub theta_1: Vec<f64>,
    pub theta_2: Vec<f64>,
    /// Radii as multiples of `sqrt(n C)`.
    #[serde(default = "default_radii")]
    pub radii_sd: Vec<f64>,
}

fn default_radii() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestsBlock {
    pub eps: EpsSchedule,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_xi")]
    pub xi: f64,
    pub n_grid: Vec<usize>,
    pub j_grid: Vec<usize>,
    pub replicates: usize,
    pub type1_replicates: usize,
    #[serde(default = "default_factors")]
    pub radius_factors: Vec<f64>,
    #[serde(default)]
    pub strategy: CoverStrategy,
    /// Monte Carlo settings for `J`; ignored when a closed form exists.
    #[serde(default)]
    pub divergence: DivergenceBlock,
    /// Envelope fit for the rate constant.
    #[serde(default)]
    pub kappa: Option<KappaBlock>,
    /// `C` in the tail bound; with `kappa` it fixes the reported bounds.
    #[serde(default)]
    pub c_tilde: Option<f64>,
}

fn default_m() -> usize {
    1
}

fn default_xi() -> f64 {
    0.25
}

fn default_factors() -> Vec<f64> {
    vec![1.05, 1.5]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceBlock {
    pub n: usize,
    pub replicates: usize,
}

impl Default for DivergenceBlock {
    fn default() -> Self {
        Self { n: 400, replicates: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaBlock {
    pub pairs: usize,
    pub min_dist: f64,
    pub max_dist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorBlock {
    #[serde(default)]
    pub prior: PriorSpec,
    /// Length of the observed data set.
    pub n: usize,
    pub mcmc: McmcConfig,
    #[serde(default = "default_chains")]
    pub chains: usize,
    pub fisher: FisherBlock,
    #[serde(default)]
    pub lan: Option<LanBlock>,
    #[serde(default)]
    pub contraction: Option<ContractionBlock>,
    /// Data lengths for the TV trend; each gets one chain.
    #[serde(default)]
    pub tv_n_grid: Vec<usize>,
}

fn default_chains() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherBlock {
    pub n: usize,
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanBlock {
    pub n_grid: Vec<usize>,
    pub h_grid: Vec<Vec<f64>>,
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionBlock {
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<f64>,
    pub replicates: usize,
    #[serde(default = "default_eps")]
    pub eps: EpsSchedule,
    /// Iterations per chain; other sampler settings follow the main block.
    #[serde(default)]
    pub iterations: Option<usize>,
}

fn default_eps() -> EpsSchedule {
    EpsSchedule::root_n(1.0)
}

impl ExperimentConfig {
    /// Parses TOML, rejecting unknown keys; `base` resolves `model_file`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.resolve_model(base)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent()).map_err(|e| match e {
            Error::Config { path: None, message } => Error::Config { path: Some(path.to_path_buf()), message },
            other => other,
        })
    }

    fn resolve_model(&mut self, base: Option<&Path>) -> Result<()> {
        match (&self.model, &self.model_file) {
            (Some(_), Some(_)) => Err(Error::config("give either `model` or `model_file`, not both")),
            (None, None) => Err(Error::config("missing `model` or `model_file`")),
            (Some(_), None) => Ok(()),
            (None, Some(file)) => {
                let path = base.map_or_else(|| file.clone(), |b| b.join(file));
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                self.model = Some(HmmSpec::from_toml(&text)?);
                self.model_file = None;
                Ok(())
            }
        }
    }

    fn check(&self) -> Result<()> {
        let spec = self.spec();
        if self.theta0.len() != spec.dim() {
            return Err(Error::config(format!(
                "theta0 has {} entries, the model needs {}",
                self.theta0.len(),
                spec.dim()
            )));
        }
        if !spec.space().contains(&self.theta0) {
            return Err(Error::config(format!("theta0 {:?} lies outside the parameter space", self.theta0)));
        }
        if let Some(s) = &self.simulate {
            if s.n_grid.is_empty() || s.n_grid.contains(&0) {
                return Err(Error::config("simulate.n_grid must be non-empty and positive"));
            }
        }
        if let Some(t) = &self.tests {
            if t.n_grid.is_empty() || t.j_grid.is_empty() {
                return Err(Error::config("tests.n_grid and tests.j_grid must be non-empty"));
            }
        }
        Ok(())
    }

    /// The resolved model.
    pub fn spec(&self) -> &HmmSpec {
        self.model.as_ref().expect("model is resolved at load time")
    }

    /// Canonical JSON of the fully materialized config.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}
