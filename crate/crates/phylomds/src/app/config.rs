//! Run configuration: one TOML file of sections, every omitted key filled
//! with a documented default so the echoed copy in the output metadata shows
//! exactly what the run used.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{Backend, DeviceTarget, EngineConfig};
use crate::error::{Error, Result};
use crate::sampler::{ChainConfig, HmcConfig, Mass, ScanWeights};
use crate::tree::{DiffusionParams, PriorHyperparams};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    pub model: ModelSection,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub engine: EngineSection,
    pub output: OutputSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

/// Input file paths. Which ones are required depends on the command:
/// simulate needs only trees, fit and cv need both.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub distances: Option<PathBuf>,
    pub trees: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub latent_dim: usize,
    /// Prior mean of every latent coordinate (broadcast across dimensions).
    #[serde(default)]
    pub mu0: f64,
    #[serde(default = "one")]
    pub tau0: f64,
    #[serde(default = "one")]
    pub tau_e: f64,
    /// Wishart degrees of freedom for the diffusion precision; defaults to
    /// latent_dim + 1.
    pub d0: Option<f64>,
    /// The Wishart rate matrix is this scale times the identity.
    #[serde(default = "one")]
    pub t0_scale: f64,
    #[serde(default = "one")]
    pub s0: f64,
    #[serde(default = "one")]
    pub r0: f64,
    /// Residual variance at chain start.
    #[serde(default = "one")]
    pub sigma2_init: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub iterations: usize,
    #[serde(default = "one_usize")]
    pub thin: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_leapfrog")]
    pub leapfrog_steps: usize,
    /// Diagonal mass entries, one per latent dimension. Omitted = identity.
    #[serde(default)]
    pub mass: Option<Vec<f64>>,
    #[serde(default = "default_weight_x")]
    pub weight_x: f64,
    #[serde(default = "default_weight_sigma2")]
    pub weight_sigma2: f64,
    #[serde(default = "default_weight_sigma_mat")]
    pub weight_sigma_mat: f64,
    #[serde(default = "default_weight_tree")]
    pub weight_tree: f64,
    /// Step-size adaptation iterations before recording starts.
    #[serde(default)]
    pub warmup: usize,
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
    #[serde(default = "default_sigma2_proposal_sd")]
    pub sigma2_proposal_sd: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "one_usize")]
    pub threads: usize,
    #[serde(default = "default_lane_width")]
    pub lane_width: usize,
    pub tile_size: Option<usize>,
    #[serde(default = "default_device")]
    pub device: String,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            backend: default_backend(),
            threads: 1,
            lane_width: default_lane_width(),
            tile_size: None,
            device: default_device(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

/// Settings only the simulate command reads.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Generative residual variance; exactly zero means y equals the latent
    /// distance with no noise.
    #[serde(default = "one")]
    pub sigma2: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { sigma2: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_seed() -> u64 {
    42
}
fn default_step_size() -> f64 {
    0.05
}
fn default_leapfrog() -> usize {
    10
}
fn default_weight_x() -> f64 {
    0.8
}
fn default_weight_sigma2() -> f64 {
    0.1
}
fn default_weight_sigma_mat() -> f64 {
    0.05
}
fn default_weight_tree() -> f64 {
    0.05
}
fn default_target_accept() -> f64 {
    0.651
}
fn default_sigma2_proposal_sd() -> f64 {
    0.5
}
fn default_backend() -> String {
    "serial".to_string()
}
fn default_lane_width() -> usize {
    4
}
fn default_device() -> String {
    "emulated".to_string()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| Error::invalid_argument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file; also returns the raw text so
    /// commands can hash exactly what the user wrote.
    pub fn load(path: &Path) -> Result<(RunConfig, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = RunConfig::from_toml_str(&text)?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.latent_dim < 1 {
            return Err(Error::invalid_argument("model.latent_dim must be at least 1"));
        }
        for (name, v) in [
            ("model.tau0", m.tau0),
            ("model.tau_e", m.tau_e),
            ("model.t0_scale", m.t0_scale),
            ("model.s0", m.s0),
            ("model.r0", m.r0),
            ("model.sigma2_init", m.sigma2_init),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid_argument(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !m.mu0.is_finite() {
            return Err(Error::invalid_argument("model.mu0 must be finite"));
        }
        if let Some(d0) = m.d0 {
            if !d0.is_finite() || d0 <= m.latent_dim as f64 - 1.0 {
                return Err(Error::invalid_argument(format!(
                    "model.d0 must exceed latent_dim - 1 = {}, got {d0}",
                    m.latent_dim as f64 - 1.0
                )));
            }
        }
        let s = &self.sampler;
        if s.iterations < 1 {
            return Err(Error::invalid_argument("sampler.iterations must be at least 1"));
        }
        if let Some(mass) = &s.mass {
            if mass.len() != m.latent_dim {
                return Err(Error::invalid_argument(format!(
                    "sampler.mass has {} entries for latent_dim = {}",
                    mass.len(),
                    m.latent_dim
                )));
            }
        }
        if !(self.simulate.sigma2.is_finite() && self.simulate.sigma2 >= 0.0) {
            return Err(Error::invalid_argument(
                "simulate.sigma2 must be finite and non-negative",
            ));
        }
        // chain-level and engine-level checks run on the assembled configs
        self.chain_config(m.latent_dim)?;
        self.engine.to_engine_config()?;
        Ok(())
    }

    pub fn require_distances(&self) -> Result<&PathBuf> {
        self.data
            .distances
            .as_ref()
            .ok_or_else(|| Error::invalid_argument("config is missing data.distances"))
    }

    pub fn require_trees(&self) -> Result<&PathBuf> {
        self.data
            .trees
            .as_ref()
            .ok_or_else(|| Error::invalid_argument("config is missing data.trees"))
    }

    /// Degrees of freedom actually used for a candidate dimension: the
    /// explicit value when given, otherwise dim + 1.
    pub fn d0_for(&self, dim: usize) -> f64 {
        self.model.d0.unwrap_or(dim as f64 + 1.0)
    }

    /// Diffusion parameters for a candidate dimension, with an identity
    /// between-dimension covariance as the chain's starting template.
    pub fn diffusion_for(&self, dim: usize) -> Result<DiffusionParams> {
        DiffusionParams::new(
            DMatrix::identity(dim, dim),
            DVector::from_element(dim, self.model.mu0),
            self.model.tau0,
            self.model.tau_e,
        )
    }

    pub fn hyper_for(&self, dim: usize) -> Result<PriorHyperparams> {
        PriorHyperparams::new(
            self.d0_for(dim),
            DMatrix::identity(dim, dim) * self.model.t0_scale,
            self.model.s0,
            self.model.r0,
        )
    }

    pub fn chain_config(&self, dim: usize) -> Result<ChainConfig> {
        let s = &self.sampler;
        let mass = match &s.mass {
            None => Mass::Identity,
            Some(entries) => {
                if entries.len() != dim {
                    return Err(Error::invalid_argument(format!(
                        "sampler.mass has {} entries for dimension {dim}",
                        entries.len()
                    )));
                }
                Mass::Diagonal(entries.clone())
            }
        };
        Ok(ChainConfig {
            iterations: s.iterations,
            thin: s.thin,
            seed: s.seed,
            hmc: HmcConfig::new(s.step_size, s.leapfrog_steps, mass)?,
            weights: ScanWeights {
                x: s.weight_x,
                sigma2: s.weight_sigma2,
                sigma_mat: s.weight_sigma_mat,
                tree: s.weight_tree,
            },
            sigma2_proposal_sd: s.sigma2_proposal_sd,
            warmup_iterations: s.warmup,
            target_accept: s.target_accept,
        })
    }

    /// Resolved config as TOML, for the metadata echo.
    pub fn echo_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses a device-target name as used in configs and CLI flags.
pub fn parse_device(name: &str) -> Result<DeviceTarget> {
    match name {
        "emulated" => Ok(DeviceTarget::Emulated),
        "native" => Ok(DeviceTarget::Native),
        other => Err(Error::invalid_argument(format!(
            "device must be \"emulated\" or \"native\", got {other:?}"
        ))),
    }
}

impl EngineSection {
    pub fn to_engine_config(&self) -> Result<EngineConfig> {
        let backend = Backend::parse(&self.backend)?;
        let device_target = parse_device(&self.device)?;
        let cfg = EngineConfig {
            backend,
            thread_count: self.threads,
            lane_width: self.lane_width,
            tile_size_b: self.tile_size,
            device_target,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// One-line human description for metadata and benchmark rows.
    pub fn describe(cfg: &EngineConfig) -> String {
        let tile = match cfg.tile_size_b {
            Some(b) => b.to_string(),
            None => "default".to_string(),
        };
        let device = match cfg.device_target {
            DeviceTarget::Emulated => "emulated",
            DeviceTarget::Native => "native",
        };
        format!(
            "{}(threads={}, lane={}, tile={}, device={})",
            cfg.backend.name(),
            cfg.thread_count,
            cfg.lane_width,
            tile,
            device
        )
    }
}
