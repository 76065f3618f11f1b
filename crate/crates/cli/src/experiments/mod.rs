//! One module per subcommand, plus shared builders that translate the
//! config into core experiment structures.

pub mod bvm;
pub mod contraction;
pub mod coverage;
pub mod llnclt;
pub mod simulate;
pub mod timevary;

use disbayes_core::belief::GaussianPrior;
use disbayes_core::diagnostics::GaussianExperiment;
use disbayes_core::graph::{AdjacencyMatrix, GraphSchedule};
use disbayes_core::models::{AgentModel, DetectionModel, LogisticModel};
use disbayes_core::rng::{Purpose, StreamFamily};
use nalgebra::DVector;

use crate::config::{ExperimentConfig, ModelKind};
use crate::HarnessError;

pub fn require_gaussian(cfg: &ExperimentConfig, what: &str) -> Result<(), HarnessError> {
    if cfg.model.kind != ModelKind::Gaussian {
        return Err(HarnessError::Config(format!(
            "{what} requires the gaussian model (closed-form divergences)"
        )));
    }
    Ok(())
}

/// Gaussian experiment spec shared by most subcommands.
pub fn gaussian_experiment(
    cfg: &ExperimentConfig,
    base: &AdjacencyMatrix,
) -> Result<GaussianExperiment, HarnessError> {
    require_gaussian(cfg, "this experiment")?;
    Ok(GaussianExperiment {
        sigmas: cfg.model.sigmas.clone().expect("validated"),
        prior: GaussianPrior {
            mean: cfg.prior.mean,
            sd: cfg.prior.sd,
        },
        theta0: cfg.model.theta0[0],
        truth_sigma0: cfg.model.sigma0,
        base: base.clone(),
        lambda: cfg.graph.lambda,
    })
}

pub fn detection_models(cfg: &ExperimentConfig) -> Result<Vec<DetectionModel>, HarnessError> {
    let sensors = cfg.model.sensors.as_ref().expect("validated");
    let sigma = cfg.model.sensor_sigma.expect("validated");
    sensors
        .iter()
        .map(|&z| {
            DetectionModel::new(z, sigma)
                .map_err(|e| HarnessError::Config(format!("model.sensors: {e}")))
        })
        .collect()
}

pub fn logistic_models(cfg: &ExperimentConfig) -> Vec<AgentModel> {
    let p = cfg.model.theta0.len();
    (0..cfg.graph.m)
        .map(|_| AgentModel::Logistic(LogisticModel { p }))
        .collect()
}

pub fn theta0_vector(cfg: &ExperimentConfig) -> DVector<f64> {
    DVector::from_vec(cfg.model.theta0.clone())
}

/// Per-replication schedule: static for `lambda = 1`, Bernoulli switch
/// seeded from `(master, replication)` otherwise.
pub fn schedule_for(
    base: &AdjacencyMatrix,
    lambda: f64,
    master_seed: u64,
    rep: u64,
) -> GraphSchedule {
    if lambda >= 1.0 {
        GraphSchedule::new_static(base.clone())
    } else {
        let fam = StreamFamily::new(master_seed, rep);
        GraphSchedule::bernoulli(base.clone(), lambda, fam.sub_seed(Purpose::Schedule))
    }
}

/// Data-stream seed for `(master, replication)`.
pub fn data_seed(master_seed: u64, rep: u64) -> u64 {
    StreamFamily::new(master_seed, rep).sub_seed(Purpose::Observation)
}
