//! The `coverage` subcommand: how often the level `1 - alpha` credible
//! region captures the data-generating parameter.
//!
//! Two columns are reported. `covered` scales the region radius by the
//! per-agent step count `t`, matching the posterior's own spread; it
//! over-covers, because the network posterior aggregates evidence from
//! all `m` agents while tempering likelihoods by `1/m`, leaving the
//! estimator's sampling spread `sqrt(m)` tighter than the posterior.
//! `covered_mt` scales by the total evidence count `m t` instead and
//! calibrates at the nominal level.

use std::path::Path;

use disbayes_core::diagnostics::{coverage_replication, wilson_interval};
use disbayes_core::graph::AdjacencyMatrix;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::records::{fmt_bool, fmt_f64, ReportKey, REPORT_KEY_HEADER};
use crate::runner::{write_summary, Experiment};
use crate::HarnessError;

use super::gaussian_experiment;

pub struct CoverageExperiment {
    pub cfg: ExperimentConfig,
    pub base: AdjacencyMatrix,
}

#[derive(Serialize)]
struct CoverageSummary {
    alpha: f64,
    t: u64,
    replications: u64,
    coverage: f64,
    wilson_low: f64,
    wilson_high: f64,
    coverage_mt: f64,
}

impl Experiment for CoverageExperiment {
    fn name(&self) -> &'static str {
        "coverage"
    }

    fn header(&self) -> String {
        format!("{REPORT_KEY_HEADER},theta_hat,radius_sq,covered,covered_mt")
    }

    fn unit_count(&self) -> u64 {
        self.cfg.run.replications
    }

    fn run_unit(&self, rep: u64) -> Result<Vec<String>, HarnessError> {
        let exp = gaussian_experiment(&self.cfg, &self.base)?;
        let alpha = self
            .cfg
            .coverage
            .as_ref()
            .expect("validated by command")
            .alpha;
        let t = self.cfg.run.t_max;
        let outcome = coverage_replication(&exp, t, alpha, self.cfg.run.seed, rep);
        let key = ReportKey {
            seed: self.cfg.run.seed,
            replication: rep,
            m: self.cfg.graph.m,
            t,
            lambda: self.cfg.graph.lambda,
            model: "gaussian",
            agent: 0,
        };
        Ok(vec![format!(
            "{},{},{},{},{}",
            key.prefix(),
            fmt_f64(outcome.theta_hat),
            fmt_f64(outcome.radius_sq),
            fmt_bool(outcome.covered),
            fmt_bool(outcome.covered_mt)
        )])
    }

    fn finalize(&self, rows: &[String], out_dir: &Path) -> Result<(), HarnessError> {
        let n = rows.len() as u64;
        let mut hits = 0u64;
        let mut hits_mt = 0u64;
        for row in rows {
            let f: Vec<&str> = row.split(',').collect();
            hits += (f[9] == "1") as u64;
            hits_mt += (f[10] == "1") as u64;
        }
        let (lo, hi) = wilson_interval(hits, n);
        write_summary(
            out_dir,
            "coverage",
            &CoverageSummary {
                alpha: self.cfg.coverage.as_ref().unwrap().alpha,
                t: self.cfg.run.t_max,
                replications: n,
                coverage: hits as f64 / n as f64,
                wilson_low: lo,
                wilson_high: hi,
                coverage_mt: hits_mt as f64 / n as f64,
            },
        )
    }
}
