//! Numerical checks of the asymptotic theory: divergences, total-variation
//! distance of the rescaled posterior to its Gaussian limit, the
//! approximation-error term `gamma^2 = E KL(P_t^j || P_t) / (mt)` with its
//! bounds, posterior-mass consistency, frequentist coverage of the
//! chi-square credible regions, and the consensus-weighted law of large
//! numbers / central limit theorem.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::belief::{distributed_update, GaussianPrior, GridBelief, NetworkState};
use crate::estimators::{credible_region, gaussian_laplace, gaussian_m_estimate};
use crate::graph::{AdjacencyMatrix, GraphSchedule};
use crate::models::{
    gaussian_kl, gaussian_location_model, sample_observation, AgentModel, Observation,
    TrueDistribution,
};
use crate::numeric::{composite_simpson, ks_distance_to_normal, normal_cdf};
use crate::rng::{Purpose, StreamFamily};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("densities have mismatched supports")]
    SupportMismatch,
    #[error("quadrature failed to produce a finite value")]
    NonIntegrable,
    #[error("unsupported model for this diagnostic: {0}")]
    UnsupportedModel(String),
}

// ---------------------------------------------------------------------
// divergences
// ---------------------------------------------------------------------

/// Divergence family. `Tv` uses the standard convention with the 1/2
/// factor (at most 1); the unnormalized integral used by the
/// Gaussian-limit reports lives in [`BvmReport`] (at most 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceKind {
    Kl,
    Renyi { rho: f64 },
    Hellinger,
    Tv,
    ChiSq,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    ClosedForm,
    Quadrature { tol: f64 },
    MonteCarlo { n: usize, stderr: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    pub kind: DivergenceKind,
    pub value: f64,
    pub method: Method,
}

/// A one-dimensional Gaussian density handle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gauss1 {
    pub mean: f64,
    pub var: f64,
}

/// Divergence between one-dimensional Gaussians. Everything except total
/// variation is closed form; total variation integrates the density
/// difference on a fixed fine grid.
pub fn divergence_gauss1(
    p: Gauss1,
    q: Gauss1,
    kind: DivergenceKind,
) -> Result<DivergenceReport, DiagnosticsError> {
    let value = match kind {
        DivergenceKind::Kl => gaussian_kl(p.mean, p.var, q.mean, q.var),
        DivergenceKind::Renyi { rho } => gaussian_renyi(p, q, rho)?,
        DivergenceKind::Hellinger => {
            // H^2 = 1 - BC with the Bhattacharyya coefficient
            let bc = (-gaussian_bhattacharyya(p, q)).exp();
            (1.0 - bc).max(0.0).sqrt()
        }
        DivergenceKind::ChiSq => {
            let d2 = gaussian_renyi(p, q, 2.0)?;
            if d2.is_finite() {
                d2.exp_m1()
            } else {
                f64::INFINITY
            }
        }
        DivergenceKind::Tv => {
            return Ok(DivergenceReport {
                kind,
                value: 0.5 * unnormalized_tv_gauss1(p.mean, p.var, q.mean, q.var),
                method: Method::Quadrature { tol: 1e-8 },
            });
        }
    };
    if value.is_nan() {
        return Err(DiagnosticsError::NonIntegrable);
    }
    Ok(DivergenceReport {
        kind,
        value,
        method: Method::ClosedForm,
    })
}

/// Renyi divergence `D_rho(p || q)`; infinite when the interpolated
/// variance `(1 - rho) v_p + rho v_q` is nonpositive.
fn gaussian_renyi(p: Gauss1, q: Gauss1, rho: f64) -> Result<f64, DiagnosticsError> {
    if (rho - 1.0).abs() < 1e-12 {
        return Ok(gaussian_kl(p.mean, p.var, q.mean, q.var));
    }
    let v_rho = (1.0 - rho) * p.var + rho * q.var;
    if v_rho <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let delta = p.mean - q.mean;
    let log_term = (v_rho / (p.var.powf(1.0 - rho) * q.var.powf(rho))).ln();
    Ok(rho * delta * delta / (2.0 * v_rho) - log_term / (2.0 * (rho - 1.0)))
}

/// Bhattacharyya distance `-ln integral sqrt(p q)` between Gaussians.
fn gaussian_bhattacharyya(p: Gauss1, q: Gauss1) -> f64 {
    let delta = p.mean - q.mean;
    let vsum = p.var + q.var;
    delta * delta / (4.0 * vsum) + 0.5 * (vsum / (2.0 * (p.var * q.var).sqrt())).ln()
}

/// Divergences between two positive densities on `[lo, hi]` given as log
/// densities, by adaptive quadrature with relative tolerance `tol`.
pub fn divergence_quadrature(
    logp: &dyn Fn(f64) -> f64,
    logq: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    kind: DivergenceKind,
    tol: f64,
) -> Result<DivergenceReport, DiagnosticsError> {
    let value = match kind {
        DivergenceKind::Kl => crate::numeric::adaptive_simpson(
            &|x| {
                let lp = logp(x);
                lp.exp() * (lp - logq(x))
            },
            lo,
            hi,
            tol,
        ),
        DivergenceKind::Renyi { rho } => {
            let integral = crate::numeric::adaptive_simpson(
                &|x| (rho * logp(x) + (1.0 - rho) * logq(x)).exp(),
                lo,
                hi,
                tol,
            );
            integral.ln() / (rho - 1.0)
        }
        DivergenceKind::Hellinger => {
            let bc = crate::numeric::adaptive_simpson(
                &|x| (0.5 * (logp(x) + logq(x))).exp(),
                lo,
                hi,
                tol,
            );
            (1.0 - bc).max(0.0).sqrt()
        }
        DivergenceKind::Tv => {
            0.5 * crate::numeric::adaptive_simpson(
                &|x| (logp(x).exp() - logq(x).exp()).abs(),
                lo,
                hi,
                tol,
            )
        }
        DivergenceKind::ChiSq => {
            crate::numeric::adaptive_simpson(&|x| (2.0 * logp(x) - logq(x)).exp(), lo, hi, tol)
                - 1.0
        }
    };
    if !value.is_finite() {
        return Err(DiagnosticsError::NonIntegrable);
    }
    Ok(DivergenceReport {
        kind,
        value,
        method: Method::Quadrature { tol },
    })
}

/// Importance-free Monte-Carlo KL estimate `E_p[log p - log q]` from
/// draws of `p`, with the standard error of the mean.
pub fn divergence_mc_kl(
    logp: &dyn Fn(f64) -> f64,
    logq: &dyn Fn(f64) -> f64,
    mut sampler: impl FnMut() -> f64,
    n: usize,
) -> Result<DivergenceReport, DiagnosticsError> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let x = sampler();
        let v = logp(x) - logq(x);
        if !v.is_finite() {
            return Err(DiagnosticsError::SupportMismatch);
        }
        sum += v;
        sum_sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    Ok(DivergenceReport {
        kind: DivergenceKind::Kl,
        value: mean,
        method: Method::MonteCarlo {
            n,
            stderr: (var / nf).sqrt(),
        },
    })
}

/// Divergence between two lattice beliefs on the same box and
/// resolution, by trapezoid sums over the shared nodes.
pub fn divergence_grid(
    p: &GridBelief,
    q: &GridBelief,
    kind: DivergenceKind,
) -> Result<DivergenceReport, DiagnosticsError> {
    if p.lo != q.lo || p.hi != q.hi || p.n_per_dim != q.n_per_dim {
        return Err(DiagnosticsError::SupportMismatch);
    }
    let mut value = 0.0;
    for idx in 0..p.node_count() {
        let w = p.quad_weight(idx);
        let (lp, lq) = (p.logw[idx], q.logw[idx]);
        value += match kind {
            DivergenceKind::Kl => {
                if lp == f64::NEG_INFINITY {
                    0.0
                } else {
                    w * lp.exp() * (lp - lq)
                }
            }
            DivergenceKind::Renyi { rho } => w * (rho * lp + (1.0 - rho) * lq).exp(),
            DivergenceKind::Hellinger => w * (0.5 * (lp + lq)).exp(),
            DivergenceKind::Tv => 0.5 * w * (lp.exp() - lq.exp()).abs(),
            DivergenceKind::ChiSq => w * (2.0 * lp - lq).exp(),
        };
    }
    let value = match kind {
        DivergenceKind::Renyi { rho } => value.ln() / (rho - 1.0),
        DivergenceKind::Hellinger => (1.0 - value).max(0.0).sqrt(),
        DivergenceKind::ChiSq => value - 1.0,
        _ => value,
    };
    if value.is_nan() {
        return Err(DiagnosticsError::NonIntegrable);
    }
    Ok(DivergenceReport {
        kind,
        value,
        method: Method::Quadrature { tol: 0.0 },
    })
}

/// Unnormalized `integral |q_t - phi|` for a lattice belief: `q_t` is the
/// density of `sqrt(t) (theta - center)` under the belief, `phi` the
/// Gaussian with covariance `laplace.covariance * t`. Evaluated on the
/// belief's own lattice by the change of variables.
pub fn bvm_tv_grid(
    grid: &GridBelief,
    laplace: &crate::estimators::LaplaceApprox,
    t: u64,
) -> Result<f64, DiagnosticsError> {
    let p = grid.dim();
    let tf = t as f64;
    // limit covariance of the rescaled variable
    let limit_cov = &laplace.covariance * tf;
    let chol = nalgebra::Cholesky::new(limit_cov.clone()).ok_or(DiagnosticsError::NonIntegrable)?;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let inv = chol.inverse();
    let mut total = 0.0;
    let mut node = DVector::zeros(p);
    for idx in 0..grid.node_count() {
        grid.node_into(idx, &mut node);
        let d = &node - &laplace.center;
        // phi(sqrt(t) d) t^{p/2} as a density in theta
        let quad = (d.transpose() * &inv * &d)[(0, 0)] * tf;
        let log_phi = -0.5 * quad - 0.5 * log_det - p as f64 * crate::numeric::LN_SQRT_2PI
            + 0.5 * p as f64 * tf.ln();
        total += grid.quad_weight(idx) * (grid.logw[idx].exp() - log_phi.exp()).abs();
    }
    Ok(total.clamp(0.0, 2.0))
}

/// Unnormalized L1 distance `integral |N(m1,v1) - N(m2,v2)|` (at most 2),
/// by composite Simpson on a grid spanning eight standard deviations of
/// both densities (2048 panels; tail mass below 1e-6).
pub fn unnormalized_tv_gauss1(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let s1 = v1.sqrt();
    let s2 = v2.sqrt();
    let lo = (m1 - 8.0 * s1).min(m2 - 8.0 * s2);
    let hi = (m1 + 8.0 * s1).max(m2 + 8.0 * s2);
    let f = |x: f64| {
        let d1 = (-0.5 * (x - m1) * (x - m1) / v1).exp() / (2.0 * std::f64::consts::PI * v1).sqrt();
        let d2 = (-0.5 * (x - m2) * (x - m2) / v2).exp() / (2.0 * std::f64::consts::PI * v2).sqrt();
        (d1 - d2).abs()
    };
    composite_simpson(&f, lo, hi, 2048).clamp(0.0, 2.0)
}

// ---------------------------------------------------------------------
// Gaussian-limit (total variation) reports
// ---------------------------------------------------------------------

/// Where the rescaled posterior is centred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BvmCenter {
    /// `sqrt(t) (theta - theta_hat)` at the M-estimate.
    MEstimate,
    /// `(theta - theta0) / eps_t` at the optimization target.
    Theta0 { eps_t: f64 },
}

/// Total variation of the rescaled posterior against its Gaussian limit,
/// in the unnormalized `integral |q - phi|` convention (at most 2). The
/// average Fisher matrix is reported in the mean chart.
#[derive(Debug, Clone, PartialEq)]
pub struct BvmReport {
    pub t: u64,
    pub agent: usize,
    pub tv_to_gaussian: f64,
    pub center: BvmCenter,
    pub chart: &'static str,
}

/// Report for a Gaussian natural belief centred at its closed-form
/// M-estimate: the rescaled posterior is `N(sqrt(t)(mean - theta_hat), t var)`,
/// compared with `N(0, 1 / v_hat)`.
pub fn bvm_report_gaussian(state: &NetworkState, agent: usize, v_hat: f64, t: u64) -> BvmReport {
    let (mean, var) = crate::belief::gaussian_moments(state, agent);
    let theta_hat = gaussian_m_estimate(state, agent).theta_hat[0];
    let tf = t as f64;
    let q_mean = tf.sqrt() * (mean - theta_hat);
    let q_var = tf * var;
    BvmReport {
        t,
        agent,
        tv_to_gaussian: unnormalized_tv_gauss1(q_mean, q_var, 0.0, 1.0 / v_hat),
        center: BvmCenter::MEstimate,
        chart: "mean",
    }
}

/// Report centred at `theta0` with an explicit contraction-rate scaling
/// `eps_t` (the misspecified-limit check).
pub fn bvm_report_gaussian_at_theta0(
    state: &NetworkState,
    agent: usize,
    v_hat: f64,
    theta0: f64,
    eps_t: f64,
    t: u64,
) -> BvmReport {
    let (mean, var) = crate::belief::gaussian_moments(state, agent);
    let q_mean = (mean - theta0) / eps_t;
    let q_var = var / (eps_t * eps_t);
    BvmReport {
        t,
        agent,
        tv_to_gaussian: unnormalized_tv_gauss1(q_mean, q_var, 0.0, 1.0 / v_hat),
        center: BvmCenter::Theta0 { eps_t },
        chart: "mean",
    }
}

// ---------------------------------------------------------------------
// Gaussian replication engine
// ---------------------------------------------------------------------

/// A Gaussian-location network experiment: per-agent scales, a shared
/// prior, the communication matrix and the data-generating truth.
#[derive(Debug, Clone)]
pub struct GaussianExperiment {
    pub sigmas: Vec<f64>,
    pub prior: GaussianPrior,
    pub theta0: f64,
    /// `Some(sigma0)` draws all data from `N(theta0, sigma0^2)` while the
    /// agents keep their assumed scales.
    pub truth_sigma0: Option<f64>,
    pub base: AdjacencyMatrix,
    /// Communication probability per step; 1 means a static graph.
    pub lambda: f64,
}

impl GaussianExperiment {
    pub fn agent_count(&self) -> usize {
        self.sigmas.len()
    }

    pub fn truth(&self, data_seed: u64) -> TrueDistribution {
        let theta0 = DVector::from_element(1, self.theta0);
        match self.truth_sigma0 {
            None => TrueDistribution::correct(theta0, data_seed),
            Some(s0) => TrueDistribution::misspecified_scale(theta0, s0, data_seed),
        }
    }

    /// Average Fisher information in the mean chart.
    pub fn avg_fisher(&self) -> f64 {
        self.sigmas.iter().map(|s| 1.0 / (s * s)).sum::<f64>() / self.sigmas.len() as f64
    }

    /// Average KL from the truth to the closest model points,
    /// `(1/m) sum_j inf_theta KL(P0 || P_theta^j)` (zero when well
    /// specified) and its worst-agent counterpart.
    pub fn baseline_kl(&self) -> (f64, f64) {
        match self.truth_sigma0 {
            None => (0.0, 0.0),
            Some(s0) => {
                let terms: Vec<f64> = self
                    .sigmas
                    .iter()
                    .map(|s| {
                        let r = s0 * s0 / (s * s);
                        0.5 * (r - 1.0 - r.ln())
                    })
                    .collect();
                let mean = terms.iter().sum::<f64>() / terms.len() as f64;
                let max = terms.iter().cloned().fold(0.0f64, f64::max);
                (mean, max)
            }
        }
    }

    /// `|E_0 log p_0|`, the negative differential entropy magnitude of
    /// the Gaussian truth.
    pub fn abs_expected_log_density(&self) -> f64 {
        let s0 = self.truth_sigma0.unwrap_or_else(|| {
            // well-specified heterogeneous truth: use the largest agent
            // scale, a conservative choice for the bound
            self.sigmas.iter().cloned().fold(f64::MIN, f64::max)
        });
        (0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * s0 * s0).ln()).abs()
    }

    /// Builds the deterministic replication `rep` of this experiment.
    pub fn replication(&self, master_seed: u64, rep: u64) -> GaussianReplication {
        let fam = StreamFamily::new(master_seed, rep);
        let models: Vec<AgentModel> = self
            .sigmas
            .iter()
            .map(|&s| AgentModel::Gaussian(gaussian_location_model(s).expect("positive scale")))
            .collect();
        let priors = vec![self.prior; self.agent_count()];
        let state = NetworkState::new_gaussian(models, &priors);
        let schedule = if self.lambda >= 1.0 {
            GraphSchedule::new_static(self.base.clone())
        } else {
            GraphSchedule::bernoulli(
                self.base.clone(),
                self.lambda,
                fam.sub_seed(Purpose::Schedule),
            )
        };
        GaussianReplication {
            experiment: self.clone(),
            truth: self.truth(fam.sub_seed(Purpose::Observation)),
            identity: AdjacencyMatrix::identity(self.agent_count()),
            schedule,
            state,
            ideal_chi: 0.0,
        }
    }
}

/// One seeded run of a Gaussian experiment, advanced step by step; also
/// accumulates the ideal-posterior sufficient statistic
/// `(1/m) sum_{k,i} T^i(x_k^i)` alongside.
#[derive(Debug, Clone)]
pub struct GaussianReplication {
    pub experiment: GaussianExperiment,
    pub state: NetworkState,
    pub schedule: GraphSchedule,
    truth: TrueDistribution,
    identity: AdjacencyMatrix,
    ideal_chi: f64,
}

impl GaussianReplication {
    /// Advances the network to step `t`, streaming one observation per
    /// agent per step.
    pub fn advance_to(&mut self, t: u64) {
        let m = self.experiment.agent_count();
        while self.state.step < t {
            let s = self.state.step;
            let obs: Vec<Observation> = (0..m)
                .map(|j| sample_observation(&self.state.models[j], &self.truth, j, s + 1))
                .collect();
            for (j, o) in obs.iter().enumerate() {
                self.ideal_chi +=
                    o.scalar() / (self.experiment.sigmas[j] * self.experiment.sigmas[j]) / m as f64;
            }
            let matrix = if self.schedule.is_active(s) {
                self.schedule.base().clone()
            } else {
                self.identity.clone()
            };
            distributed_update(&mut self.state, &obs, &matrix).expect("gaussian update");
        }
    }

    /// Posterior mean and variance of one agent.
    pub fn posterior(&self, agent: usize) -> Gauss1 {
        let (mean, var) = crate::belief::gaussian_moments(&self.state, agent);
        Gauss1 { mean, var }
    }

    /// The distributed ideal posterior (tempered likelihood, shared
    /// prior) at the current step.
    pub fn ideal(&self) -> Gauss1 {
        let m = self.experiment.agent_count() as f64;
        let t = self.state.step as f64;
        let mut precision = self.experiment.prior.precision();
        for s in &self.experiment.sigmas {
            precision += (t / m) / (s * s);
        }
        let mean = (self.ideal_chi + self.experiment.prior.u()) / precision;
        Gauss1 {
            mean,
            var: 1.0 / precision,
        }
    }

    /// Closed-form M-estimate of one agent.
    pub fn m_est(&self, agent: usize) -> f64 {
        gaussian_m_estimate(&self.state, agent).theta_hat[0]
    }

    /// `KL(P_t^j || P_t) / (m t)` at the current step.
    pub fn gamma_sq(&self, agent: usize) -> f64 {
        let p = self.posterior(agent);
        let q = self.ideal();
        let m = self.experiment.agent_count() as f64;
        let t = self.state.step as f64;
        gaussian_kl(p.mean, p.var, q.mean, q.var) / (m * t)
    }
}

// ---------------------------------------------------------------------
// approximation error (gamma^2) and its bounds
// ---------------------------------------------------------------------

/// Monte-Carlo mean and standard error of `gamma^2` for agent 0 across
/// `reps` independent replications.
pub fn gamma_sq_mc(
    experiment: &GaussianExperiment,
    t: u64,
    reps: u64,
    master_seed: u64,
) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for rep in 0..reps {
        let mut run = experiment.replication(master_seed, rep);
        run.advance_to(t);
        let g = run.gamma_sq(0);
        sum += g;
        sum_sq += g * g;
    }
    let n = reps as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Deviation-based bound on `gamma^2`: static graphs use
/// `16 m ln m / (nu t) (|E_0 log p_0| + max_i inf KL)`; Bernoulli-switch
/// schedules use the per-regime bounds (infinite at `lambda = 0`).
pub fn gamma_sq_bound(
    m: usize,
    nu: f64,
    lambda: f64,
    t: u64,
    abs_e0_log_p0: f64,
    max_inf_kl: f64,
) -> f64 {
    let mf = m as f64;
    let tf = t as f64;
    let moment = abs_e0_log_p0 + max_inf_kl;
    if lambda >= 1.0 {
        16.0 * mf * mf.ln() / (nu * tf) * moment
    } else if lambda == 0.0 {
        f64::INFINITY
    } else if lambda >= 2.0 / mf {
        (16.0 * mf * mf.ln() + 8.0 * mf * lambda.ln()) / (lambda * nu * tf) * moment
    } else {
        4.0 * mf * mf / (nu * tf) * moment
    }
}

// ---------------------------------------------------------------------
// posterior-mass consistency
// ---------------------------------------------------------------------

/// Posterior mass of the KL neighbourhood
/// `{theta : (1/m) sum_j KL(P0 || P_theta^j) < eps}` for the Gaussian
/// network: the average KL is the quadratic `a (theta - theta0)^2 + c`,
/// so the neighbourhood is an interval and the mass is a normal CDF
/// difference.
pub fn consistency_mass_gaussian(
    posterior: Gauss1,
    sigmas: &[f64],
    truth_sigma0: Option<f64>,
    theta0: f64,
    eps: f64,
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
    if eps <= c {
        return 0.0;
    }
    let r = ((eps - c) / a).sqrt();
    let sd = posterior.var.sqrt();
    normal_cdf((theta0 + r - posterior.mean) / sd) - normal_cdf((theta0 - r - posterior.mean) / sd)
}

/// Posterior mass of the Euclidean ball `{|theta - theta0| < eps}` on a
/// grid belief (the metric-neighbourhood substitute used for detection).
pub fn consistency_mass_ball(grid: &GridBelief, theta0: &DVector<f64>, eps: f64) -> f64 {
    grid.mass_where(|theta| (theta - theta0).norm() < eps)
}

/// Ball mass for a detection natural belief on a lattice scaled to the
/// posterior's own spread. A fixed unit-square lattice under-resolves
/// the posterior once its standard deviation falls below the spacing, so
/// the window is centred at the M-estimate with half-width eight
/// standard deviations (from the log-posterior curvature), widened to
/// contain the ball and clamped to the unit square; mass outside the
/// window is negligible at that width.
pub fn detection_ball_mass(
    models: &[crate::models::DetectionModel],
    belief: &crate::belief::NaturalBelief,
    t: f64,
    theta0: &DVector<f64>,
    eps: f64,
    n_per_dim: usize,
) -> Result<f64, DiagnosticsError> {
    use crate::estimators::{detection_m_estimate, DetectionSurrogateLoss, SurrogateLoss};
    let loss = DetectionSurrogateLoss::from_belief(models, belief, t.max(1.0));
    let (est, _) = detection_m_estimate(&loss, 60);
    // log-posterior curvature at the optimum; per-axis spreads from the
    // inverse when it is positive definite, the whole square otherwise
    let curvature = loss.hess(&est.theta_hat) * t.max(1.0);
    let spread = nalgebra::Cholesky::new(curvature.clone()).map(|chol| {
        let cov = chol.inverse();
        (cov[(0, 0)].max(0.0).sqrt(), cov[(1, 1)].max(0.0).sqrt())
    });
    let (mut lo, mut hi) = ([0.0f64; 2], [1.0f64; 2]);
    if let Some((sx, sy)) = spread {
        if sx > 0.0 && sy > 0.0 {
            for (d, s) in [(0usize, sx), (1usize, sy)] {
                lo[d] = (est.theta_hat[d] - 8.0 * s)
                    .min(theta0[d] - 1.05 * eps)
                    .max(0.0);
                hi[d] = (est.theta_hat[d] + 8.0 * s)
                    .max(theta0[d] + 1.05 * eps)
                    .min(1.0);
            }
        }
    }
    // midpoint lattice over the window
    let n = n_per_dim.max(16);
    let hx = (hi[0] - lo[0]) / n as f64;
    let hy = (hi[1] - lo[1]) / n as f64;
    let mut logs = Vec::with_capacity(n * n);
    let mut in_ball = Vec::with_capacity(n * n);
    let mut node = DVector::zeros(2);
    for ix in 0..n {
        node[0] = lo[0] + (ix as f64 + 0.5) * hx;
        for iy in 0..n {
            node[1] = lo[1] + (iy as f64 + 0.5) * hy;
            logs.push(crate::belief::detection_log_unnorm(
                models,
                &belief.chi,
                &belief.w,
                &node,
            ));
            in_ball.push((&node - theta0).norm() < eps);
        }
    }
    let log_z = crate::numeric::logsumexp(&logs);
    if !log_z.is_finite() {
        return Err(DiagnosticsError::NonIntegrable);
    }
    let mass: f64 = logs
        .iter()
        .zip(&in_ball)
        .filter(|(_, &b)| b)
        .map(|(l, _)| (l - log_z).exp())
        .sum();
    Ok(mass.clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------
// frequentist coverage of the credible region
// ---------------------------------------------------------------------

/// One coverage draw: whether `theta0` landed in agent 0's level
/// `1 - alpha` region at step `t`. `covered` uses the per-agent step
/// count in the region radius as stated by the theory; `covered_mt`
/// rescales by the total evidence count `m t` (reported alongside, see
/// the coverage experiment notes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageOutcome {
    pub covered: bool,
    pub covered_mt: bool,
    pub theta_hat: f64,
    pub radius_sq: f64,
}

pub fn coverage_replication(
    experiment: &GaussianExperiment,
    t: u64,
    alpha: f64,
    master_seed: u64,
    rep: u64,
) -> CoverageOutcome {
    let mut run = experiment.replication(master_seed, rep);
    run.advance_to(t);
    let m = experiment.agent_count() as f64;
    let laplace = gaussian_laplace(&run.state, 0, t as f64);
    let region = credible_region(&laplace, alpha, t as f64);
    let region_mt = credible_region(&laplace, alpha, t as f64 * m);
    let theta0 = DVector::from_element(1, experiment.theta0);
    CoverageOutcome {
        covered: region.contains(&theta0),
        covered_mt: region_mt.contains(&theta0),
        theta_hat: laplace.center[0],
        radius_sq: region.radius_sq,
    }
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    let z = 1.959963984540054f64;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

// ---------------------------------------------------------------------
// consensus-weighted LLN / CLT
// ---------------------------------------------------------------------

/// Scalar streams with known per-agent means and scales, mixed over a
/// static communication matrix.
#[derive(Debug, Clone)]
pub struct LlnCltConfig {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub base: AdjacencyMatrix,
    pub t_lln: u64,
    pub t_clt: u64,
    pub replications: u64,
    pub agent: usize,
}

#[derive(Debug, Clone)]
pub struct LlnCltReport {
    /// `Z_t^j` per agent at `t_lln`.
    pub lln_values: Vec<f64>,
    pub network_mean: f64,
    pub max_abs_error: f64,
    /// Kolmogorov-Smirnov distance of the standardized statistic to the
    /// standard normal across replications.
    pub ks_distance: f64,
}

/// Mixes one stream realization: `Y_{s+1} = S_{s+1} + A Y_s`, returning Y
/// at time `t` (weights `[A^{t-k}]` on past draws).
fn mixed_sum(cfg: &LlnCltConfig, t: u64, fam: &StreamFamily, center: bool) -> Vec<f64> {
    let m = cfg.means.len();
    let a = cfg.base.weights();
    let mut y = vec![0.0; m];
    let mut next = vec![0.0; m];
    for step in 1..=t {
        for (j, slot) in next.iter_mut().enumerate() {
            let mut rng = fam.rng(j as u64, step, Purpose::Observation);
            let z: f64 = rng.sample(StandardNormal);
            let s = cfg.means[j] + cfg.sds[j] * z;
            let own = if center { s - cfg.means[j] } else { s };
            *slot = own + (0..m).map(|i| a[(i, j)] * y[i]).sum::<f64>();
        }
        std::mem::swap(&mut y, &mut next);
    }
    y
}

/// Runs the law-of-large-numbers check at `t_lln` and the central-limit
/// check (Kolmogorov-Smirnov against the standard normal) over
/// `replications` independent streams.
pub fn distributed_lln_clt_check(cfg: &LlnCltConfig, master_seed: u64) -> LlnCltReport {
    let m = cfg.means.len();
    let network_mean = cfg.means.iter().sum::<f64>() / m as f64;

    let fam = StreamFamily::new(master_seed, 0);
    let y = mixed_sum(cfg, cfg.t_lln, &fam, false);
    let lln_values: Vec<f64> = y.iter().map(|v| v / cfg.t_lln as f64).collect();
    let max_abs_error = lln_values
        .iter()
        .map(|v| (v - network_mean).abs())
        .fold(0.0f64, f64::max);

    let avg_var = cfg.sds.iter().map(|s| s * s).sum::<f64>() / m as f64;
    let ks_distance = if avg_var > 0.0 {
        let scale = (m as f64 / cfg.t_clt as f64).sqrt() / avg_var.sqrt();
        let mut stats = Vec::with_capacity(cfg.replications as usize);
        for rep in 0..cfg.replications {
            let fam = StreamFamily::new(master_seed, rep + 1);
            let y = mixed_sum(cfg, cfg.t_clt, &fam, true);
            stats.push(scale * y[cfg.agent]);
        }
        ks_distance_to_normal(&stats)
    } else {
        // degenerate (zero-variance) streams have no limit statistic
        0.0
    };
    LlnCltReport {
        lln_values,
        network_mean,
        max_abs_error,
        ks_distance,
    }
}
