//! The `lln-clt` subcommand: consensus-weighted law of large numbers and
//! central limit checks on synthetic scalar streams.

use std::path::Path;

use disbayes_core::diagnostics::{distributed_lln_clt_check, LlnCltConfig};
use disbayes_core::graph::AdjacencyMatrix;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::records::{fmt_f64, ReportKey, REPORT_KEY_HEADER};
use crate::runner::{write_summary, Experiment};
use crate::HarnessError;

pub struct LlnCltExperiment {
    pub cfg: ExperimentConfig,
    pub base: AdjacencyMatrix,
}

#[derive(Serialize)]
struct LlnCltSummary {
    network_mean: f64,
    lln_values: Vec<f64>,
    max_abs_error: f64,
    ks_distance: f64,
}

impl LlnCltExperiment {
    fn core_config(&self) -> LlnCltConfig {
        let section = self.cfg.llnclt.as_ref().expect("validated by command");
        LlnCltConfig {
            means: section.means.clone(),
            sds: section.sds.clone(),
            base: self.base.clone(),
            t_lln: section.t_lln,
            t_clt: section.t_clt,
            replications: section.replications,
            agent: 0,
        }
    }
}

impl Experiment for LlnCltExperiment {
    fn name(&self) -> &'static str {
        "llnclt"
    }

    fn header(&self) -> String {
        format!("{REPORT_KEY_HEADER},z_lln,max_abs_error,ks_distance")
    }

    fn unit_count(&self) -> u64 {
        1
    }

    fn run_unit(&self, _unit: u64) -> Result<Vec<String>, HarnessError> {
        let core_cfg = self.core_config();
        let report = distributed_lln_clt_check(&core_cfg, self.cfg.run.seed);
        let section = self.cfg.llnclt.as_ref().unwrap();
        let mut rows = Vec::new();
        for (agent, z) in report.lln_values.iter().enumerate() {
            let key = ReportKey {
                seed: self.cfg.run.seed,
                replication: 0,
                m: self.cfg.graph.m,
                t: section.t_lln,
                lambda: 1.0,
                model: "streams",
                agent,
            };
            rows.push(format!(
                "{},{},{},{}",
                key.prefix(),
                fmt_f64(*z),
                fmt_f64(report.max_abs_error),
                fmt_f64(report.ks_distance)
            ));
        }
        Ok(rows)
    }

    fn finalize(&self, rows: &[String], out_dir: &Path) -> Result<(), HarnessError> {
        let section = self.cfg.llnclt.as_ref().unwrap();
        let network_mean = section.means.iter().sum::<f64>() / section.means.len() as f64;
        let mut lln_values = Vec::new();
        let mut max_abs_error = 0.0;
        let mut ks_distance = 0.0;
        for row in rows {
            let f: Vec<&str> = row.split(',').collect();
            lln_values.push(f[7].parse::<f64>().unwrap());
            max_abs_error = f[8].parse::<f64>().unwrap();
            ks_distance = f[9].parse::<f64>().unwrap();
        }
        write_summary(
            out_dir,
            "llnclt",
            &LlnCltSummary {
                network_mean,
                lln_values,
                max_abs_error,
                ks_distance,
            },
        )
    }
}
