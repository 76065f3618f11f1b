//! Row formatting for the output CSVs. Floats are written with 17
//! significant digits so every value round-trips exactly and reruns are
//! byte-identical.

/// `{:.16e}`: 17 significant digits, enough to reconstruct the f64 bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// An optional metric renders as the empty field.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn fmt_bool(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

/// One trajectory row: `(replication, agent, checkpoint)` coordinates
/// plus the per-step diagnostics.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub replication: u64,
    pub agent: usize,
    pub t: u64,
    pub theta_hat: Vec<f64>,
    pub tv_bvm: Option<f64>,
    pub mass_eps: f64,
    pub gamma_sq: Option<f64>,
    pub boundary_flag: bool,
}

impl TrajectoryRecord {
    pub fn header(dim_theta: usize) -> String {
        let mut cols = vec![
            "seed".to_string(),
            "replication".into(),
            "agent".into(),
            "t".into(),
        ];
        for i in 1..=dim_theta {
            cols.push(format!("theta_hat_{i}"));
        }
        cols.extend([
            "tv_bvm".into(),
            "mass_eps".into(),
            "gamma_sq".into(),
            "boundary_flag".into(),
        ]);
        cols.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        let mut fields = vec![
            self.seed.to_string(),
            self.replication.to_string(),
            self.agent.to_string(),
            self.t.to_string(),
        ];
        for v in &self.theta_hat {
            fields.push(fmt_f64(*v));
        }
        fields.push(fmt_opt(self.tv_bvm));
        fields.push(fmt_f64(self.mass_eps));
        fields.push(fmt_opt(self.gamma_sq));
        fields.push(fmt_bool(self.boundary_flag).to_string());
        fields.join(",")
    }
}

/// The shared sweep-coordinate prefix every report row carries:
/// `seed,replication,m,t,lambda,model,agent`.
#[derive(Debug, Clone)]
pub struct ReportKey {
    pub seed: u64,
    pub replication: u64,
    pub m: usize,
    pub t: u64,
    pub lambda: f64,
    pub model: &'static str,
    pub agent: usize,
}

pub const REPORT_KEY_HEADER: &str = "seed,replication,m,t,lambda,model,agent";

impl ReportKey {
    pub fn prefix(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.seed,
            self.replication,
            self.m,
            self.t,
            fmt_f64(self.lambda),
            self.model,
            self.agent
        )
    }
}
