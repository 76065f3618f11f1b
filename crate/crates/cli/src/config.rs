//! TOML experiment configuration with field-level validation.

use std::path::{Path, PathBuf};

use disbayes_core::graph::{metropolis_weights, AdjacencyMatrix, Topology};
use serde::Deserialize;

use crate::HarnessError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    pub graph: GraphConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub contraction: Option<ContractionConfig>,
    #[serde(default)]
    pub timevary: Option<TimevaryConfig>,
    #[serde(default)]
    pub coverage: Option<CoverageConfig>,
    #[serde(default)]
    pub llnclt: Option<LlnCltSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub theta0: Vec<f64>,
    /// Gaussian: per-agent scales, one per agent.
    #[serde(default)]
    pub sigmas: Option<Vec<f64>>,
    /// Present for the misspecified-scale Gaussian truth.
    #[serde(default)]
    pub sigma0: Option<f64>,
    /// Detection: sensor locations, one per agent.
    #[serde(default)]
    pub sensors: Option<Vec<[f64; 2]>>,
    /// Detection: shared sensor noise scale.
    #[serde(default)]
    pub sensor_sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gaussian,
    Logistic,
    Detection,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: f64,
    pub sd: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { mean: 0.0, sd: 1.0 }
    }
}

/// Lattice for grid beliefs (logistic); detection always uses the unit
/// square.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub family: GraphFamily,
    pub m: usize,
    /// Edge-list path for `family = "file"`.
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Per-step communication probability; 1 means a static graph.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFamily {
    Complete,
    Ring,
    Path,
    Star,
    File,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_max: u64,
    pub checkpoints: Vec<u64>,
    pub replications: u64,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// KL radius (Gaussian) or Euclidean radius (grid models) of the
    /// posterior-mass neighbourhood column.
    #[serde(default = "default_eps_mass")]
    pub eps_mass: f64,
    /// Emit the per-checkpoint approximation-error column (Gaussian).
    #[serde(default)]
    pub gamma_sq: bool,
}

fn default_workers() -> usize {
    1
}

fn default_eps_mass() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionConfig {
    pub t_grid: Vec<u64>,
    pub replications: u64,
    #[serde(default)]
    pub misspecified: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimevaryConfig {
    pub lambdas: Vec<f64>,
    pub t: u64,
    pub replications: u64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub alpha: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlnCltSection {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub t_lln: u64,
    pub t_clt: u64,
    pub replications: u64,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_str_validated(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |msg: String| Err(HarnessError::Config(msg));
        let m = self.graph.m;
        if m == 0 {
            return err("graph.m: must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.graph.lambda) {
            return err(format!("graph.lambda: {} not in [0, 1]", self.graph.lambda));
        }
        if self.graph.family == GraphFamily::File && self.graph.file.is_none() {
            return err("graph.file: required when graph.family = \"file\"".into());
        }
        if self.run.checkpoints.is_empty() {
            return err("run.checkpoints: at least one checkpoint required".into());
        }
        if !self.run.checkpoints.windows(2).all(|w| w[0] < w[1]) {
            return err("run.checkpoints: must be strictly increasing".into());
        }
        if *self.run.checkpoints.last().unwrap() > self.run.t_max {
            return err("run.checkpoints: last checkpoint exceeds run.t_max".into());
        }
        if self.run.checkpoints[0] == 0 {
            return err("run.checkpoints: checkpoints start at 1".into());
        }
        if self.run.replications == 0 {
            return err("run.replications: must be positive".into());
        }
        if self.run.workers == 0 {
            return err("run.workers: must be positive".into());
        }
        if self.run.eps_mass <= 0.0 {
            return err("run.eps_mass: must be positive".into());
        }
        if self.prior.sd <= 0.0 {
            return err("prior.sd: must be positive".into());
        }
        match self.model.kind {
            ModelKind::Gaussian => {
                let sigmas = self.model.sigmas.as_ref().ok_or_else(|| {
                    HarnessError::Config("model.sigmas: required for gaussian".into())
                })?;
                if sigmas.len() != m {
                    return err(format!(
                        "model.sigmas: {} entries for {} agents",
                        sigmas.len(),
                        m
                    ));
                }
                if sigmas.iter().any(|&s| s <= 0.0) {
                    return err("model.sigmas: scales must be positive".into());
                }
                if self.model.theta0.len() != 1 {
                    return err("model.theta0: gaussian location is one-dimensional".into());
                }
                if let Some(s0) = self.model.sigma0 {
                    if s0 <= 0.0 {
                        return err("model.sigma0: must be positive".into());
                    }
                }
            }
            ModelKind::Logistic => {
                if self.model.theta0.is_empty() || self.model.theta0.len() > 2 {
                    return err("model.theta0: logistic supports 1 or 2 dimensions".into());
                }
                if self.model.sigma0.is_some() {
                    return err("model.sigma0: misspecified truth is gaussian-only".into());
                }
                let grid = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("grid: required for logistic".into()))?;
                let p = self.model.theta0.len();
                if grid.lo.len() != p || grid.hi.len() != p {
                    return err("grid.lo/hi: dimension must match model.theta0".into());
                }
                if grid.lo.iter().zip(&grid.hi).any(|(l, h)| l >= h) {
                    return err("grid: lo must be strictly below hi".into());
                }
                if grid.resolution < 2 {
                    return err("grid.resolution: at least 2".into());
                }
            }
            ModelKind::Detection => {
                let sensors = self.model.sensors.as_ref().ok_or_else(|| {
                    HarnessError::Config("model.sensors: required for detection".into())
                })?;
                if sensors.len() != m {
                    return err(format!(
                        "model.sensors: {} sensors for {} agents",
                        sensors.len(),
                        m
                    ));
                }
                let sigma = self.model.sensor_sigma.ok_or_else(|| {
                    HarnessError::Config("model.sensor_sigma: required for detection".into())
                })?;
                if sigma <= 0.0 {
                    return err("model.sensor_sigma: must be positive".into());
                }
                if self.model.theta0.len() != 2 {
                    return err("model.theta0: detection is two-dimensional".into());
                }
                if self.model.theta0.iter().any(|&v| v <= 0.0 || v >= 1.0) {
                    return err("model.theta0: target must lie in the open unit square".into());
                }
                if self.model.sigma0.is_some() {
                    return err("model.sigma0: misspecified truth is gaussian-only".into());
                }
            }
        }
        if let Some(c) = &self.contraction {
            if c.t_grid.len() < 2 || !c.t_grid.windows(2).all(|w| w[0] < w[1]) {
                return err("contraction.t_grid: need at least two increasing horizons".into());
            }
            if c.replications == 0 {
                return err("contraction.replications: must be positive".into());
            }
        }
        if let Some(tv) = &self.timevary {
            if tv.lambdas.is_empty() || tv.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return err("timevary.lambdas: probabilities in [0, 1]".into());
            }
            if tv.t == 0 || tv.replications == 0 {
                return err("timevary: t and replications must be positive".into());
            }
        }
        if let Some(c) = &self.coverage {
            if !(c.alpha > 0.0 && c.alpha < 1.0) {
                return err(format!("coverage.alpha: {} not in (0, 1)", c.alpha));
            }
        }
        if let Some(l) = &self.llnclt {
            if l.means.len() != m || l.sds.len() != m {
                return err("llnclt.means/sds: one entry per agent".into());
            }
            if l.sds.iter().any(|&s| s < 0.0) {
                return err("llnclt.sds: must be nonnegative".into());
            }
        }
        Ok(())
    }

    /// The consensus base matrix named by the graph block.
    pub fn base_matrix(&self) -> Result<AdjacencyMatrix, HarnessError> {
        let m = self.graph.m;
        let top = match self.graph.family {
            GraphFamily::Complete => Topology::complete(m),
            GraphFamily::Ring => Topology::ring(m),
            GraphFamily::Path => Topology::path(m),
            GraphFamily::Star => Topology::star(m),
            GraphFamily::File => {
                let path = self.graph.file.as_ref().expect("validated");
                let top = Topology::from_edge_list_file(path)
                    .map_err(|e| HarnessError::Config(format!("graph.file: {e}")))?;
                if top.node_count() != m {
                    return Err(HarnessError::Config(format!(
                        "graph.file: topology has {} nodes, graph.m = {m}",
                        top.node_count()
                    )));
                }
                Ok(top)
            }
        }
        .map_err(|e| HarnessError::Config(format!("graph: {e}")))?;
        metropolis_weights(&top).map_err(|e| HarnessError::Config(format!("graph: {e}")))
    }

    pub fn dim_theta(&self) -> usize {
        self.model.theta0.len()
    }
}
