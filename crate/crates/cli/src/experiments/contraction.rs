//! The `contraction` subcommand: posterior loss versus horizon. Per
//! replication and horizon the row carries the posterior expected squared
//! error, the posterior expected average KL to the truth (whose plateau
//! is the misspecification baseline), the realized approximation error
//! `gamma^2` and the closed-form baseline.

use std::path::Path;

use disbayes_core::diagnostics::{Gauss1, GaussianExperiment};
use disbayes_core::graph::AdjacencyMatrix;
use disbayes_core::numeric::ols;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::records::{fmt_f64, ReportKey, REPORT_KEY_HEADER};
use crate::runner::{write_summary, Experiment};
use crate::HarnessError;

use super::gaussian_experiment;

pub struct ContractionExperiment {
    pub cfg: ExperimentConfig,
    pub base: AdjacencyMatrix,
}

impl ContractionExperiment {
    fn spec(&self) -> Result<GaussianExperiment, HarnessError> {
        let mut exp = gaussian_experiment(&self.cfg, &self.base)?;
        let section = self.cfg.contraction.as_ref().expect("validated by command");
        if section.misspecified && exp.truth_sigma0.is_none() {
            // default misspecified scenario: agents assume their scales,
            // the data are twice as dispersed
            exp.truth_sigma0 = Some(2.0);
        }
        Ok(exp)
    }
}

/// Posterior expectation of the squared distance to `theta0`.
pub fn expected_sq_loss(post: Gauss1, theta0: f64) -> f64 {
    let d = post.mean - theta0;
    d * d + post.var
}

/// Posterior expectation of `(1/m) sum_j KL(P0 || P_theta^j)`: the
/// average KL is the quadratic `a (theta - theta0)^2 + c`, so the
/// expectation is `a (bias^2 + var) + c`.
pub fn expected_kl_loss(
    post: Gauss1,
    sigmas: &[f64],
    truth_sigma0: Option<f64>,
    theta0: f64,
) -> f64 {
    let m = sigmas.len() as f64;
    let a: f64 = sigmas.iter().map(|s| 1.0 / (2.0 * s * s)).sum::<f64>() / m;
    let c: f64 = match truth_sigma0 {
        None => 0.0,
        Some(s0) => {
            sigmas
                .iter()
                .map(|s| {
                    let r = s0 * s0 / (s * s);
                    0.5 * (r - 1.0 - r.ln())
                })
                .sum::<f64>()
                / m
        }
    };
    a * expected_sq_loss(post, theta0) + c
}

#[derive(Serialize)]
struct ContractionCellSummary {
    t: u64,
    mean_sq_loss: f64,
    mean_kl_loss: f64,
    mean_gamma_sq: f64,
    fitted_c: f64,
}

#[derive(Serialize)]
struct ContractionSummary {
    misspecified: bool,
    /// Least-squares slope of `ln E[sq loss]` on `ln t`.
    slope: f64,
    /// Intercept of the `kl_loss ~ a / t + c` fit; the misspecification
    /// plateau.
    fitted_asymptote: f64,
    /// Closed-form `(1/m) sum_j KL(P0 || P_{theta0}^j)`.
    baseline_kl: f64,
    cells: Vec<ContractionCellSummary>,
}

impl Experiment for ContractionExperiment {
    fn name(&self) -> &'static str {
        "contraction"
    }

    fn header(&self) -> String {
        format!("{REPORT_KEY_HEADER},sq_loss,kl_loss,gamma_sq,baseline_kl")
    }

    fn unit_count(&self) -> u64 {
        self.cfg
            .contraction
            .as_ref()
            .expect("validated")
            .replications
    }

    fn run_unit(&self, rep: u64) -> Result<Vec<String>, HarnessError> {
        let exp = self.spec()?;
        let section = self.cfg.contraction.as_ref().unwrap();
        let baseline = exp.baseline_kl().0;
        let mut run = exp.replication(self.cfg.run.seed, rep);
        let mut rows = Vec::new();
        for &t in &section.t_grid {
            run.advance_to(t);
            let post = run.posterior(0);
            let key = ReportKey {
                seed: self.cfg.run.seed,
                replication: rep,
                m: self.cfg.graph.m,
                t,
                lambda: self.cfg.graph.lambda,
                model: "gaussian",
                agent: 0,
            };
            rows.push(format!(
                "{},{},{},{},{}",
                key.prefix(),
                fmt_f64(expected_sq_loss(post, exp.theta0)),
                fmt_f64(expected_kl_loss(
                    post,
                    &exp.sigmas,
                    exp.truth_sigma0,
                    exp.theta0
                )),
                fmt_f64(run.gamma_sq(0)),
                fmt_f64(baseline)
            ));
        }
        Ok(rows)
    }

    fn finalize(&self, rows: &[String], out_dir: &Path) -> Result<(), HarnessError> {
        let exp = self.spec()?;
        let section = self.cfg.contraction.as_ref().unwrap();
        let baseline = exp.baseline_kl().0;
        let mut cells = Vec::new();
        for &t in &section.t_grid {
            let mut sq = Vec::new();
            let mut kl = Vec::new();
            let mut gs = Vec::new();
            for row in rows {
                let f: Vec<&str> = row.split(',').collect();
                if f[3] == t.to_string() {
                    sq.push(f[7].parse::<f64>().unwrap());
                    kl.push(f[8].parse::<f64>().unwrap());
                    gs.push(f[9].parse::<f64>().unwrap());
                }
            }
            let n = sq.len() as f64;
            let mean_sq = sq.iter().sum::<f64>() / n;
            let mean_kl = kl.iter().sum::<f64>() / n;
            let mean_gs = gs.iter().sum::<f64>() / n;
            let fitted_c = mean_sq / (1.0 / t as f64 + mean_gs + baseline);
            cells.push(ContractionCellSummary {
                t,
                mean_sq_loss: mean_sq,
                mean_kl_loss: mean_kl,
                mean_gamma_sq: mean_gs,
                fitted_c,
            });
        }
        let log_t: Vec<f64> = cells.iter().map(|c| (c.t as f64).ln()).collect();
        let log_sq: Vec<f64> = cells.iter().map(|c| c.mean_sq_loss.ln()).collect();
        let (slope, _) = ols(&log_t, &log_sq);
        // kl_loss ~ a / t + c: least squares on 1/t
        let inv_t: Vec<f64> = cells.iter().map(|c| 1.0 / c.t as f64).collect();
        let kl_means: Vec<f64> = cells.iter().map(|c| c.mean_kl_loss).collect();
        let (_, asymptote) = ols(&inv_t, &kl_means);
        write_summary(
            out_dir,
            "contraction",
            &ContractionSummary {
                misspecified: section.misspecified,
                slope,
                fitted_asymptote: asymptote,
                baseline_kl: baseline,
                cells,
            },
        )
    }
}
