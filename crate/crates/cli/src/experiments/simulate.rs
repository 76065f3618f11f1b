//! The `simulate` subcommand: stream the update loop and emit one
//! trajectory row per (replication, agent, checkpoint).

use std::path::Path;

use disbayes_core::belief::{distributed_update, AgentBelief, GridBelief, NetworkState};
use disbayes_core::diagnostics::{
    bvm_report_gaussian, consistency_mass_ball, consistency_mass_gaussian, detection_ball_mass,
};
use disbayes_core::estimators::{
    average_fisher, detection_m_estimate, m_estimate, DetectionSurrogateLoss, LaplaceApprox,
    LogisticSurrogateLoss,
};
use disbayes_core::graph::{weight_rows, AdjacencyMatrix};
use disbayes_core::models::{sample_observation, LogisticData, Observation, TrueDistribution};
use nalgebra::{DMatrix, DVector};

use crate::config::{ExperimentConfig, ModelKind};
use crate::records::TrajectoryRecord;
use crate::runner::Experiment;
use crate::HarnessError;

use super::{
    data_seed, detection_models, gaussian_experiment, logistic_models, schedule_for, theta0_vector,
};

pub struct SimulateExperiment {
    pub cfg: ExperimentConfig,
    pub base: AdjacencyMatrix,
}

impl Experiment for SimulateExperiment {
    fn name(&self) -> &'static str {
        "trajectory"
    }

    fn header(&self) -> String {
        TrajectoryRecord::header(self.cfg.dim_theta())
    }

    fn unit_count(&self) -> u64 {
        self.cfg.run.replications
    }

    fn run_unit(&self, rep: u64) -> Result<Vec<String>, HarnessError> {
        let records = match self.cfg.model.kind {
            ModelKind::Gaussian => gaussian_trajectory(&self.cfg, &self.base, rep)?,
            ModelKind::Detection => detection_run(&self.cfg, &self.base, rep)?.records,
            ModelKind::Logistic => logistic_run(&self.cfg, &self.base, rep)?.records,
        };
        Ok(records.iter().map(|r| r.to_csv_row()).collect())
    }

    fn finalize(&self, _rows: &[String], _out_dir: &Path) -> Result<(), HarnessError> {
        Ok(())
    }
}

fn gaussian_trajectory(
    cfg: &ExperimentConfig,
    base: &AdjacencyMatrix,
    rep: u64,
) -> Result<Vec<TrajectoryRecord>, HarnessError> {
    let exp = gaussian_experiment(cfg, base)?;
    let seed = cfg.run.seed;
    let v_hat = exp.avg_fisher();
    let mut run = exp.replication(seed, rep);
    let mut records = Vec::new();
    for &t in &cfg.run.checkpoints {
        run.advance_to(t);
        for agent in 0..cfg.graph.m {
            let post = run.posterior(agent);
            let report = bvm_report_gaussian(&run.state, agent, v_hat, t);
            let mass = consistency_mass_gaussian(
                post,
                &exp.sigmas,
                exp.truth_sigma0,
                exp.theta0,
                cfg.run.eps_mass,
            );
            records.push(TrajectoryRecord {
                seed,
                replication: rep,
                agent,
                t,
                theta_hat: vec![run.m_est(agent)],
                tv_bvm: Some(report.tv_to_gaussian),
                mass_eps: mass,
                gamma_sq: cfg.run.gamma_sq.then(|| run.gamma_sq(agent)),
                boundary_flag: false,
            });
        }
    }
    Ok(records)
}

/// Final-checkpoint artifacts of one detection replication, used both by
/// the CSV writer and the verification suites.
pub struct DetectionRun {
    pub records: Vec<TrajectoryRecord>,
    /// Per-agent M-estimates at the final checkpoint.
    pub final_theta: Vec<DVector<f64>>,
    pub final_boundary: Vec<bool>,
    /// Laplace covariance `fisher(theta_hat)^{-1} / t` per agent.
    pub final_laplace_cov: Vec<DMatrix<f64>>,
}

pub fn detection_run(
    cfg: &ExperimentConfig,
    base: &AdjacencyMatrix,
    rep: u64,
) -> Result<DetectionRun, HarnessError> {
    let dets = detection_models(cfg)?;
    let models: Vec<_> = dets
        .iter()
        .map(|&d| disbayes_core::models::AgentModel::Detection(d))
        .collect();
    let m = cfg.graph.m;
    let theta0 = theta0_vector(cfg);
    let seed = cfg.run.seed;
    let truth = TrueDistribution::correct(theta0.clone(), data_seed(seed, rep));
    let schedule = schedule_for(base, cfg.graph.lambda, seed, rep);
    let identity = AdjacencyMatrix::identity(m);
    let mut state = NetworkState::new_detection(models.clone());
    let mut records = Vec::new();
    let mut final_theta = Vec::new();
    let mut final_boundary = Vec::new();
    let mut final_laplace_cov = Vec::new();
    let t_final = *cfg.run.checkpoints.last().unwrap();
    for step in 1..=t_final {
        let obs: Vec<Observation> = (0..m)
            .map(|i| sample_observation(&models[i], &truth, i, step))
            .collect();
        let matrix = if schedule.is_active(step - 1) {
            base
        } else {
            &identity
        };
        distributed_update(&mut state, &obs, matrix)
            .map_err(|e| HarnessError::Numerical(e.to_string()))?;
        if cfg.run.checkpoints.contains(&step) {
            for agent in 0..m {
                let AgentBelief::Natural(b) = &state.beliefs[agent] else {
                    unreachable!()
                };
                let loss = DetectionSurrogateLoss::from_belief(&dets, b, step as f64);
                let (est, boundary) = detection_m_estimate(&loss, 60);
                let mass =
                    detection_ball_mass(&dets, b, step as f64, &theta0, cfg.run.eps_mass, 200)
                        .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                records.push(TrajectoryRecord {
                    seed,
                    replication: rep,
                    agent,
                    t: step,
                    theta_hat: est.theta_hat.iter().copied().collect(),
                    tv_bvm: None,
                    mass_eps: mass,
                    gamma_sq: None,
                    boundary_flag: boundary,
                });
                if step == t_final {
                    let fisher = average_fisher(&models, &est.theta_hat, None)
                        .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                    let laplace = LaplaceApprox::new(est.theta_hat.clone(), fisher, step as f64)
                        .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                    final_theta.push(est.theta_hat);
                    final_boundary.push(boundary);
                    final_laplace_cov.push(laplace.covariance);
                }
            }
        }
    }
    Ok(DetectionRun {
        records,
        final_theta,
        final_boundary,
        final_laplace_cov,
    })
}

/// Final-checkpoint artifacts of one logistic replication.
pub struct LogisticRun {
    pub records: Vec<TrajectoryRecord>,
    /// Agent 0's lattice belief at the final checkpoint.
    pub final_grid: GridBelief,
    /// Agent 0's Newton M-estimate at the final checkpoint.
    pub final_theta: DVector<f64>,
    /// Average Fisher information at the final M-estimate.
    pub final_fisher: DMatrix<f64>,
}

pub fn logistic_run(
    cfg: &ExperimentConfig,
    base: &AdjacencyMatrix,
    rep: u64,
) -> Result<LogisticRun, HarnessError> {
    let models = logistic_models(cfg);
    let m = cfg.graph.m;
    let p = cfg.dim_theta();
    let theta0 = theta0_vector(cfg);
    let seed = cfg.run.seed;
    let grid_cfg = cfg.grid.as_ref().expect("validated");
    let truth = TrueDistribution::correct(theta0.clone(), data_seed(seed, rep));
    let schedule = schedule_for(base, cfg.graph.lambda, seed, rep);
    let identity = AdjacencyMatrix::identity(m);
    let mut state = NetworkState::new_grid(
        models.clone(),
        grid_cfg.lo.clone(),
        grid_cfg.hi.clone(),
        grid_cfg.resolution,
        |_| 0.0,
    );
    let mut history: Vec<Vec<LogisticData>> = vec![Vec::new(); m];
    let t_final = *cfg.run.checkpoints.last().unwrap();
    let mut records = Vec::new();
    let mut final_grid = None;
    let mut final_theta = None;
    let mut final_fisher = None;
    for step in 1..=t_final {
        let obs: Vec<Observation> = (0..m)
            .map(|i| sample_observation(&models[i], &truth, i, step))
            .collect();
        for (i, o) in obs.iter().enumerate() {
            history[i].push(o.labeled().clone());
        }
        let matrix = if schedule.is_active(step - 1) {
            base
        } else {
            &identity
        };
        distributed_update(&mut state, &obs, matrix)
            .map_err(|e| HarnessError::Numerical(e.to_string()))?;
        if cfg.run.checkpoints.contains(&step) {
            for agent in 0..m {
                let est = logistic_m_estimate(&schedule, &history, agent, step, p)?;
                let AgentBelief::Grid(g) = &state.beliefs[agent] else {
                    unreachable!()
                };
                let mass = consistency_mass_ball(g, &theta0, cfg.run.eps_mass);
                records.push(TrajectoryRecord {
                    seed,
                    replication: rep,
                    agent,
                    t: step,
                    theta_hat: est.iter().copied().collect(),
                    tv_bvm: None,
                    mass_eps: mass,
                    gamma_sq: None,
                    boundary_flag: false,
                });
                if step == t_final && agent == 0 {
                    let hist_slices: Vec<Vec<LogisticData>> = history.clone();
                    let fisher = average_fisher(&models, &est, Some(&hist_slices))
                        .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                    final_grid = Some(g.clone());
                    final_theta = Some(est);
                    final_fisher = Some(fisher);
                }
            }
        }
    }
    Ok(LogisticRun {
        records,
        final_grid: final_grid.expect("final checkpoint reached"),
        final_theta: final_theta.expect("final checkpoint reached"),
        final_fisher: final_fisher.expect("final checkpoint reached"),
    })
}

/// Newton M-estimate for one agent at step `t` from the weighted
/// observation history (weights from the schedule's matrix products).
fn logistic_m_estimate(
    schedule: &disbayes_core::graph::GraphSchedule,
    history: &[Vec<LogisticData>],
    agent: usize,
    t: u64,
    p: usize,
) -> Result<DVector<f64>, HarnessError> {
    let m = history.len();
    let rows = weight_rows(schedule, agent, t);
    // rows[t - 1] is the empty product (identity row), which is exactly
    // the own-newest-likelihood weight of the product-form posterior
    let mut items = Vec::with_capacity(m * t as usize);
    for k in 1..=t as usize {
        for i in 0..m {
            let w = rows[k - 1][i];
            if w > 0.0 {
                items.push((w, history[i][k - 1].clone()));
            }
        }
    }
    let loss = LogisticSurrogateLoss::new(items, t as f64);
    let est = m_estimate(&loss, &DVector::zeros(p))
        .map_err(|e| HarnessError::Numerical(e.to_string()))?;
    if !est.converged {
        return Err(HarnessError::Numerical(format!(
            "logistic M-estimation did not converge at t = {t} (agent {agent}); \
             the data may be separated"
        )));
    }
    Ok(est.theta_hat)
}
