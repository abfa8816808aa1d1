//! Run configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use robin_bayes::analysis::AnalysisSettings;
use robin_bayes::fem_stokes::BodyForce;
use robin_bayes::mcmc::{ChainConfig, Correction};
use robin_bayes::mesh::MeshSpec;
use robin_bayes::observation::{HProfile, ModelKind, Pde};
use robin_bayes::prior::{CoeffVector, PriorFamily, PriorSpec, Rescale};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Laplace,
    Stokes,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelName,
    pub mesh: MeshSpec,
    /// Screening mesh of the two-level sampler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_mesh: Option<MeshSpec>,
    pub h: HProfile,
    /// Density; Stokes only.
    #[serde(default = "one")]
    pub rho: f64,
    /// Gravitational field; Stokes only.
    #[serde(default)]
    pub g: [f64; 2],
    #[serde(default)]
    pub m_beta: f64,
}

impl ModelSection {
    pub fn model_kind(&self) -> Result<ModelKind> {
        let pde = match self.kind {
            ModelName::Laplace => Pde::Laplace,
            ModelName::Stokes => Pde::Stokes {
                body_force: BodyForce([self.rho * self.g[0], self.rho * self.g[1]]),
            },
        };
        Ok(ModelKind::new(pde, self.h, self.m_beta)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Matern,
    SquaredExp,
}

impl FamilyName {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyName::Matern => "matern",
            FamilyName::SquaredExp => "squared_exp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub family: FamilyName,
    /// Matérn smoothness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Squared-exponential decay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    pub truncation: usize,
    /// Shrink the prior with the observation count.
    #[serde(default)]
    pub rescale: bool,
}

impl PriorSection {
    pub fn spec(&self, n_obs: usize) -> Result<PriorSpec> {
        let family = match (self.family, self.alpha, self.r) {
            (FamilyName::Matern, Some(alpha), None) => PriorFamily::Matern { alpha },
            (FamilyName::SquaredExp, None, Some(r)) => PriorFamily::SquaredExp { r },
            (FamilyName::Matern, _, _) => bail!("matern prior needs `alpha` and no `r`"),
            (FamilyName::SquaredExp, _, _) => bail!("squared_exp prior needs `r` and no `alpha`"),
        };
        let rescale = if self.rescale {
            Rescale::On { n: n_obs as f64 }
        } else {
            Rescale::Off
        };
        Ok(PriorSpec::new(family, self.truncation, rescale)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub theta0: CoeffVector,
    pub n: usize,
    pub sigma_noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Single,
    TwoLevel,
    LiteralTwoLevel,
}

impl Mode {
    pub fn correction(self) -> Option<Correction> {
        match self {
            Mode::Single => None,
            Mode::TwoLevel => Some(Correction::Exact),
            Mode::LiteralTwoLevel => Some(Correction::Literal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    /// Ground truth plus an independent `N(0, scale²)` shift per coefficient.
    Shifted { scale: f64, seed: u64 },
    PriorDraw { seed: u64 },
}

impl Default for Init {
    fn default() -> Self {
        Init::Shifted { scale: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    #[serde(flatten)]
    pub chain: ChainFields,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub init: Init,
}

/// Mirrors [`ChainConfig`]; kept separate so that unknown keys in the
/// section are still rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainFields {
    pub iterations: usize,
    pub burn_in: usize,
    pub gamma0: f64,
    #[serde(default = "ChainFields::default_target")]
    pub target_accept: f64,
    #[serde(default = "ChainFields::default_interval")]
    pub adapt_interval: usize,
    #[serde(default = "ChainFields::default_gain")]
    pub adapt_gain: f64,
    #[serde(default = "ChainFields::default_thinning")]
    pub thinning: usize,
    pub seed: u64,
}

impl ChainFields {
    fn defaults() -> ChainConfig {
        ChainConfig::new(1, 0, 1.0, 0)
    }

    fn default_target() -> f64 {
        Self::defaults().target_accept
    }

    fn default_interval() -> usize {
        Self::defaults().adapt_interval
    }

    fn default_gain() -> f64 {
        Self::defaults().adapt_gain
    }

    fn default_thinning() -> usize {
        Self::defaults().thinning
    }

    pub fn to_chain_config(self) -> ChainConfig {
        ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            gamma0: self.gamma0,
            target_accept: self.target_accept,
            adapt_interval: self.adapt_interval,
            adapt_gain: self.adapt_gain,
            thinning: self.thinning,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub prior: PriorSection,
    pub data: DataSection,
    pub mcmc: McmcSection,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    /// Used when no `--out` is given. Relative paths are taken from the
    /// config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

const CHAIN_KEYS: [&str; 8] = [
    "iterations",
    "burn_in",
    "gamma0",
    "target_accept",
    "adapt_interval",
    "adapt_gain",
    "thinning",
    "seed",
];

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        // `flatten` disables `deny_unknown_fields`, so the mcmc keys are
        // checked by hand.
        let raw: serde_json::Value = serde_json::from_str(text).context("config is not valid JSON")?;
        if let Some(m) = raw.get("mcmc").and_then(|m| m.as_object()) {
            for key in m.keys() {
                if !CHAIN_KEYS.contains(&key.as_str()) && key != "mode" && key != "init" {
                    bail!("unknown field `{key}` in mcmc section");
                }
            }
        }
        let cfg: RunConfig = serde_json::from_value(raw).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.mesh.build()?;
        if let Some(c) = self.model.coarse_mesh {
            c.build()?;
        }
        self.model.model_kind()?;
        let spec = self.prior.spec(self.data.n.max(2))?;
        if self.data.theta0.len() != spec.dim() {
            bail!(
                "theta0 has {} coefficients but the prior truncation needs {}",
                self.data.theta0.len(),
                spec.dim()
            );
        }
        if self.data.n == 0 {
            bail!("data.n must be at least 1");
        }
        if !(self.data.sigma_noise > 0.0 && self.data.sigma_noise.is_finite()) {
            bail!("data.sigma_noise must be positive");
        }
        self.mcmc.chain.to_chain_config().validate()?;
        if self.mcmc.mode != Mode::Single && self.model.coarse_mesh.is_none() {
            bail!("two-level sampling needs model.coarse_mesh");
        }
        if let Init::Shifted { scale, .. } = self.mcmc.init {
            if !(scale >= 0.0 && scale.is_finite()) {
                bail!("init shift scale must be non-negative");
            }
        }
        let a = &self.analysis;
        if !(0.0..0.5).contains(&a.epsilon) || !(a.level > 0.0 && a.level < 1.0) || a.grid_size < 2 {
            bail!("analysis needs 0 <= epsilon < 1/2, 0 < level < 1 and grid_size >= 2");
        }
        Ok(())
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        self.prior.spec(self.data.n)
    }

    pub fn chain_config(&self) -> ChainConfig {
        self.mcmc.chain.to_chain_config()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"kind": "laplace", "mesh": {"nx": 20, "ny": 4, "Lx": 1.0, "Ly": 0.2},
                  "h": {"sinusoid": {"amplitude": 10, "frequency": 12, "offset": 1}}},
        "prior": {"family": "matern", "alpha": 1.0, "truncation": 2},
        "data": {"theta0": [-0.6, 0.7, 2, 0.1, -0.08], "n": 10, "sigma_noise": 0.1, "seed": 1},
        "mcmc": {"iterations": 200, "burn_in": 100, "gamma0": 1e-7, "thinning": 10, "seed": 2}
    }"#;

    #[test]
    fn round_trip() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.analysis.epsilon, 0.05);
        assert_eq!(c.mcmc.chain.adapt_interval, 1000);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = MINIMAL.replace("\"thinning\"", "\"thining\"");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = MINIMAL.replace("\"truncation\"", "\"K\"");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = MINIMAL.replace("\"Lx\"", "\"lx\"");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_inconsistent_sections() {
        let bad = MINIMAL.replace("[-0.6, 0.7, 2, 0.1, -0.08]", "[1, 2, 3]");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = MINIMAL.replace("\"alpha\": 1.0", "\"r\": 1.0");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = MINIMAL.replace("\"seed\": 2}", "\"seed\": 2, \"mode\": \"two_level\"}");
        assert!(RunConfig::from_json(&bad).is_err());
    }
}
