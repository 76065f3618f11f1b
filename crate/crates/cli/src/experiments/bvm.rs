//! The `bvm` subcommand: total variation of the rescaled posterior to its
//! Gaussian limit across checkpoints, centred at the M-estimate and (for
//! misspecification studies) at the optimization target with the
//! parametric rate and a doubled rate.

use std::path::Path;

use disbayes_core::diagnostics::{bvm_report_gaussian, bvm_report_gaussian_at_theta0};
use disbayes_core::graph::AdjacencyMatrix;
use disbayes_core::numeric::median;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::records::{fmt_f64, ReportKey, REPORT_KEY_HEADER};
use crate::runner::{write_summary, Experiment};
use crate::HarnessError;

use super::gaussian_experiment;

pub struct BvmExperiment {
    pub cfg: ExperimentConfig,
    pub base: AdjacencyMatrix,
}

#[derive(Serialize)]
struct BvmSummary {
    checkpoints: Vec<u64>,
    median_tv: Vec<f64>,
    median_tv_theta0: Vec<f64>,
    median_tv_theta0_eps2x: Vec<f64>,
    monotone_decreasing: bool,
}

impl Experiment for BvmExperiment {
    fn name(&self) -> &'static str {
        "bvm"
    }

    fn header(&self) -> String {
        format!("{REPORT_KEY_HEADER},tv_bvm,tv_theta0,tv_theta0_eps2x")
    }

    fn unit_count(&self) -> u64 {
        self.cfg.run.replications
    }

    fn run_unit(&self, rep: u64) -> Result<Vec<String>, HarnessError> {
        let exp = gaussian_experiment(&self.cfg, &self.base)?;
        let v_hat = exp.avg_fisher();
        let mut run = exp.replication(self.cfg.run.seed, rep);
        let mut rows = Vec::new();
        for &t in &self.cfg.run.checkpoints {
            run.advance_to(t);
            let eps = (t as f64).sqrt().recip();
            for agent in 0..self.cfg.graph.m {
                let at_est = bvm_report_gaussian(&run.state, agent, v_hat, t);
                let at_truth =
                    bvm_report_gaussian_at_theta0(&run.state, agent, v_hat, exp.theta0, eps, t);
                let at_truth_2x = bvm_report_gaussian_at_theta0(
                    &run.state,
                    agent,
                    v_hat,
                    exp.theta0,
                    2.0 * eps,
                    t,
                );
                let key = ReportKey {
                    seed: self.cfg.run.seed,
                    replication: rep,
                    m: self.cfg.graph.m,
                    t,
                    lambda: self.cfg.graph.lambda,
                    model: "gaussian",
                    agent,
                };
                rows.push(format!(
                    "{},{},{},{}",
                    key.prefix(),
                    fmt_f64(at_est.tv_to_gaussian),
                    fmt_f64(at_truth.tv_to_gaussian),
                    fmt_f64(at_truth_2x.tv_to_gaussian)
                ));
            }
        }
        Ok(rows)
    }

    fn finalize(&self, rows: &[String], out_dir: &Path) -> Result<(), HarnessError> {
        let mut median_tv = Vec::new();
        let mut median_theta0 = Vec::new();
        let mut median_2x = Vec::new();
        for &t in &self.cfg.run.checkpoints {
            let mut tv = Vec::new();
            let mut tv0 = Vec::new();
            let mut tv2 = Vec::new();
            for row in rows {
                let f: Vec<&str> = row.split(',').collect();
                // agent-0 rows at this checkpoint
                if f[3] == t.to_string() && f[6] == "0" {
                    tv.push(f[7].parse::<f64>().unwrap());
                    tv0.push(f[8].parse::<f64>().unwrap());
                    tv2.push(f[9].parse::<f64>().unwrap());
                }
            }
            median_tv.push(median(&tv));
            median_theta0.push(median(&tv0));
            median_2x.push(median(&tv2));
        }
        let monotone = median_tv.windows(2).all(|w| w[1] < w[0]);
        write_summary(
            out_dir,
            "bvm",
            &BvmSummary {
                checkpoints: self.cfg.run.checkpoints.clone(),
                median_tv,
                median_tv_theta0: median_theta0,
                median_tv_theta0_eps2x: median_2x,
                monotone_decreasing: monotone,
            },
        )
    }
}
