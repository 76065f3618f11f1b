//! Agent beliefs under the distributed Bayes rule.
//!
//! Each update multiplies the agent's own likelihood by the consensus-
//! weighted geometric mean of the network's previous beliefs:
//! `p_{t+1}^j ∝ p^j(x_{t+1}^j) prod_i (p_t^i)^{A[i][j]}`. Two
//! representations are maintained:
//!
//! - [`NaturalBelief`]: an aggregated sufficient statistic `chi` plus a
//!   per-agent log-partition weight vector `w`, exact for exponential
//!   families (Gaussian location, and the truncated-normal detection
//!   family through its per-sensor distance sums);
//! - [`GridBelief`]: a log-density lattice over a bounded box for models
//!   without a finite-dimensional recursion (logistic regression), also
//!   used as an independent cross-check of the natural form.
//!
//! All agents are initialized at the merged prior (the normalized `1/m`
//! geometric mean of the individual priors), which every agent then
//! carries with a fixed unit coefficient: column-stochastic mixing leaves
//! that coefficient invariant, making the step recursion match the
//! product-form posterior exactly.
//!
//! Everything lives in log space end to end; normalizers are computed on
//! demand.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::AdjacencyMatrix;
use crate::models::{AgentModel, DetectionModel, ExpFamily, Observation};
use crate::numeric::{logsumexp_weighted, LN_SQRT_2PI};

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("agents use different belief representations")]
    RepresentationMismatch,
    #[error("observation outside the model support: {0}")]
    ObservationOutOfSupport(String),
    #[error("theta outside the belief's box")]
    OutOfBox,
    #[error("belief normalizer is not finite")]
    NonFiniteNormalizer,
    #[error("priors have mismatched supports")]
    SupportMismatch,
    #[error("expected {expected} observations, got {got}")]
    ObservationCount { expected: usize, got: usize },
}

/// Gaussian prior in exponential-family form: natural coordinate
/// `u = mean / sd^2`, log-partition `psi0(theta) = theta^2 / (2 sd^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianPrior {
    pub fn u(&self) -> f64 {
        self.mean / (self.sd * self.sd)
    }

    pub fn precision(&self) -> f64 {
        1.0 / (self.sd * self.sd)
    }
}

/// Normalized `1/m` geometric mean of Gaussian priors: natural parameters
/// are averaged, so precisions and `u` coordinates both average.
pub fn prior_merge_gaussian(priors: &[GaussianPrior]) -> GaussianPrior {
    assert!(!priors.is_empty());
    let m = priors.len() as f64;
    let precision: f64 = priors.iter().map(|p| p.precision()).sum::<f64>() / m;
    let u: f64 = priors.iter().map(|p| p.u()).sum::<f64>() / m;
    GaussianPrior {
        mean: u / precision,
        sd: precision.sqrt().recip(),
    }
}

/// The shared merged prior all agents start from.
#[derive(Debug, Clone, PartialEq)]
pub enum MergedPrior {
    Gaussian(GaussianPrior),
    /// Uniform over the belief box (grid representations).
    UniformBox,
}

/// Exact exponential-family belief: aggregated sufficient statistic plus
/// per-agent log-partition weights. After `t` updates the weights sum to
/// `t` (total evidence count) and the prior keeps coefficient one.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalBelief {
    /// Aggregated sufficient statistic; dimension 1 for the Gaussian
    /// family, `m` for detection (one weighted distance sum per sensor).
    pub chi: DVector<f64>,
    /// Per-agent log-partition weights.
    pub w: DVector<f64>,
    /// Natural coordinate of the shared merged prior (empty for the
    /// uniform prior); its log-partition coefficient is fixed at one.
    pub prior_u: DVector<f64>,
}

impl NaturalBelief {
    pub fn empty(dim_stat: usize, m: usize, prior_u: DVector<f64>) -> Self {
        Self {
            chi: DVector::zeros(dim_stat),
            w: DVector::zeros(m),
            prior_u,
        }
    }

    /// Total evidence count `sum_i w[i]`; equals the step count up to
    /// floating-point drift.
    pub fn evidence(&self) -> f64 {
        self.w.sum()
    }
}

/// Log-density lattice over an axis-aligned box (1 or 2 dimensions),
/// node-centred with both endpoints included; masses use the trapezoid
/// rule. `logw` is kept normalized (trapezoid mass one) after every
/// mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBelief {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n_per_dim: usize,
    pub logw: Vec<f64>,
}

impl GridBelief {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn node_count(&self) -> usize {
        self.n_per_dim.pow(self.dim() as u32)
    }

    fn spacing(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / (self.n_per_dim - 1) as f64
    }

    /// Coordinates of the node at a linear index (row-major, last
    /// dimension fastest).
    pub fn node(&self, index: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.node_into(index, &mut out);
        out
    }

    /// Allocation-free variant of [`GridBelief::node`] for hot loops.
    pub fn node_into(&self, mut index: usize, out: &mut DVector<f64>) {
        for d in (0..self.dim()).rev() {
            let i = index % self.n_per_dim;
            index /= self.n_per_dim;
            out[d] = self.lo[d] + i as f64 * self.spacing(d);
        }
    }

    /// Trapezoid quadrature weight of a node.
    pub fn quad_weight(&self, mut index: usize) -> f64 {
        let mut w = 1.0;
        for d in (0..self.dim()).rev() {
            let i = index % self.n_per_dim;
            index /= self.n_per_dim;
            let edge = i == 0 || i == self.n_per_dim - 1;
            w *= self.spacing(d) * if edge { 0.5 } else { 1.0 };
        }
        w
    }

    /// Uniform belief over the box.
    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>, n_per_dim: usize) -> Self {
        Self::from_log_prior(lo, hi, n_per_dim, |_| 0.0)
    }

    /// Belief proportional to `exp(log_prior)` on the lattice.
    pub fn from_log_prior(
        lo: Vec<f64>,
        hi: Vec<f64>,
        n_per_dim: usize,
        log_prior: impl Fn(&DVector<f64>) -> f64,
    ) -> Self {
        assert!(
            n_per_dim >= 2,
            "grid needs at least two nodes per dimension"
        );
        assert!(
            matches!(lo.len(), 1 | 2),
            "grid beliefs support 1 or 2 dimensions"
        );
        let mut g = Self {
            lo,
            hi,
            n_per_dim,
            logw: Vec::new(),
        };
        g.logw = (0..g.node_count()).map(|i| log_prior(&g.node(i))).collect();
        g.normalize()
            .expect("prior must have finite mass on the box");
        g
    }

    /// Log of the trapezoid-rule mass of `exp(logw)`.
    pub fn log_mass(&self) -> f64 {
        let weights: Vec<f64> = (0..self.node_count())
            .map(|i| self.quad_weight(i))
            .collect();
        logsumexp_weighted(&self.logw, &weights)
    }

    /// Rescales so the trapezoid mass is exactly one.
    pub fn normalize(&mut self) -> Result<(), BeliefError> {
        let lm = self.log_mass();
        if !lm.is_finite() {
            return Err(BeliefError::NonFiniteNormalizer);
        }
        self.logw.iter_mut().for_each(|v| *v -= lm);
        Ok(())
    }

    fn nearest_index(&self, theta: &DVector<f64>) -> Result<usize, BeliefError> {
        if theta.len() != self.dim() {
            return Err(BeliefError::OutOfBox);
        }
        let mut index = 0usize;
        for d in 0..self.dim() {
            let v = theta[d];
            if v < self.lo[d] - 1e-12 || v > self.hi[d] + 1e-12 {
                return Err(BeliefError::OutOfBox);
            }
            let i = ((v - self.lo[d]) / self.spacing(d)).round() as usize;
            index = index * self.n_per_dim + i.min(self.n_per_dim - 1);
        }
        Ok(index)
    }

    /// Normalized log-density at the lattice node nearest to `theta`.
    pub fn log_density_at(&self, theta: &DVector<f64>) -> Result<f64, BeliefError> {
        Ok(self.logw[self.nearest_index(theta)?])
    }

    /// Trapezoid mass of `{theta : pred(theta)}`.
    pub fn mass_where(&self, pred: impl Fn(&DVector<f64>) -> bool) -> f64 {
        (0..self.node_count())
            .filter(|&i| pred(&self.node(i)))
            .map(|i| self.quad_weight(i) * self.logw[i].exp())
            .sum()
    }

    /// Posterior expectation of `f(theta)` by the trapezoid rule.
    pub fn expect(&self, f: impl Fn(&DVector<f64>) -> f64) -> f64 {
        (0..self.node_count())
            .map(|i| self.quad_weight(i) * self.logw[i].exp() * f(&self.node(i)))
            .sum()
    }

    /// Node index of the maximal log-density; ties resolve to the lowest
    /// linear index.
    pub fn argmax(&self) -> usize {
        let mut best = 0usize;
        for i in 1..self.logw.len() {
            if self.logw[i] > self.logw[best] {
                best = i;
            }
        }
        best
    }
}

/// One agent's belief.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentBelief {
    Natural(NaturalBelief),
    Grid(GridBelief),
}

/// All agents' beliefs plus the model handles needed to evaluate them.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub models: Vec<AgentModel>,
    pub beliefs: Vec<AgentBelief>,
    pub prior: MergedPrior,
    pub step: u64,
}

impl NetworkState {
    /// Gaussian-location network in the exact natural representation;
    /// individual priors are merged and shared.
    pub fn new_gaussian(models: Vec<AgentModel>, priors: &[GaussianPrior]) -> Self {
        assert!(models.iter().all(|m| matches!(m, AgentModel::Gaussian(_))));
        let m = models.len();
        let merged = prior_merge_gaussian(priors);
        let beliefs = (0..m)
            .map(|_| {
                AgentBelief::Natural(NaturalBelief::empty(
                    1,
                    m,
                    DVector::from_element(1, merged.u()),
                ))
            })
            .collect();
        Self {
            models,
            beliefs,
            prior: MergedPrior::Gaussian(merged),
            step: 0,
        }
    }

    /// Detection network in the natural representation (per-sensor
    /// weighted distance sums) with the uniform prior on `[0,1]^2`.
    pub fn new_detection(models: Vec<AgentModel>) -> Self {
        assert!(models.iter().all(|m| matches!(m, AgentModel::Detection(_))));
        let m = models.len();
        let beliefs = (0..m)
            .map(|_| AgentBelief::Natural(NaturalBelief::empty(m, m, DVector::zeros(0))))
            .collect();
        Self {
            models,
            beliefs,
            prior: MergedPrior::UniformBox,
            step: 0,
        }
    }

    /// Grid-belief network over a box; the prior is the normalized
    /// restriction of `log_prior` to the box, shared by all agents.
    pub fn new_grid(
        models: Vec<AgentModel>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        n_per_dim: usize,
        log_prior: impl Fn(&DVector<f64>) -> f64,
    ) -> Self {
        let proto = GridBelief::from_log_prior(lo, hi, n_per_dim, log_prior);
        let beliefs = models
            .iter()
            .map(|_| AgentBelief::Grid(proto.clone()))
            .collect();
        Self {
            models,
            beliefs,
            prior: MergedPrior::UniformBox,
            step: 0,
        }
    }

    pub fn agent_count(&self) -> usize {
        self.models.len()
    }
}

/// One synchronous step of the distributed Bayes rule. Reads all step-`t`
/// beliefs, writes fresh step-`t+1` beliefs (double buffered). The
/// exponent on sender `i`'s belief in receiver `j`'s update is entry
/// `(i, j)` of `a`.
pub fn distributed_update(
    state: &mut NetworkState,
    observations: &[Observation],
    a: &AdjacencyMatrix,
) -> Result<(), BeliefError> {
    let m = state.agent_count();
    if observations.len() != m {
        return Err(BeliefError::ObservationCount {
            expected: m,
            got: observations.len(),
        });
    }
    assert_eq!(a.agent_count(), m, "matrix size does not match the network");

    let mut next = Vec::with_capacity(m);
    for j in 0..m {
        match &state.beliefs[j] {
            AgentBelief::Natural(_) => {
                let own = natural_suff_stat(&state.models[j], j, m, &observations[j])?;
                let prev = |i: usize| match &state.beliefs[i] {
                    AgentBelief::Natural(n) => Ok(n),
                    AgentBelief::Grid(_) => Err(BeliefError::RepresentationMismatch),
                };
                let template = prev(j)?;
                let mut chi = own;
                let mut w = DVector::zeros(m);
                w[j] = 1.0;
                for i in 0..m {
                    let b = prev(i)?;
                    let aij = a.entry(i, j);
                    if aij != 0.0 {
                        chi += &b.chi * aij;
                        w += &b.w * aij;
                    }
                }
                next.push(AgentBelief::Natural(NaturalBelief {
                    chi,
                    w,
                    prior_u: template.prior_u.clone(),
                }));
            }
            AgentBelief::Grid(g) => {
                let mut logw = vec![0.0; g.node_count()];
                let mut node = DVector::zeros(g.dim());
                for (idx, slot) in logw.iter_mut().enumerate() {
                    g.node_into(idx, &mut node);
                    let lik = state.models[j]
                        .log_density(&node, &observations[j])
                        .map_err(|e| BeliefError::ObservationOutOfSupport(e.to_string()))?;
                    let mut mixed = 0.0;
                    for i in 0..m {
                        let aij = a.entry(i, j);
                        if aij != 0.0 {
                            match &state.beliefs[i] {
                                AgentBelief::Grid(gi) => mixed += aij * gi.logw[idx],
                                AgentBelief::Natural(_) => {
                                    return Err(BeliefError::RepresentationMismatch)
                                }
                            }
                        }
                    }
                    *slot = lik + mixed;
                }
                let mut g2 = GridBelief {
                    lo: g.lo.clone(),
                    hi: g.hi.clone(),
                    n_per_dim: g.n_per_dim,
                    logw,
                };
                g2.normalize()?;
                next.push(AgentBelief::Grid(g2));
            }
        }
    }
    state.beliefs = next;
    state.step += 1;
    Ok(())
}

/// The own-observation contribution to `chi` for the natural forms.
fn natural_suff_stat(
    model: &AgentModel,
    agent: usize,
    m: usize,
    obs: &Observation,
) -> Result<DVector<f64>, BeliefError> {
    match model {
        AgentModel::Gaussian(g) => Ok(g.suff_stat(obs)),
        AgentModel::Detection(d) => {
            let dist = obs.scalar();
            if dist < 0.0 || dist > d.upper() {
                return Err(BeliefError::ObservationOutOfSupport(format!(
                    "distance {dist} outside [0, {}]",
                    d.upper()
                )));
            }
            let mut v = DVector::zeros(m);
            v[agent] = dist;
            Ok(v)
        }
        AgentModel::Logistic(_) => Err(BeliefError::RepresentationMismatch),
    }
}

/// Mean and variance of a Gaussian natural belief (prior included).
pub fn gaussian_moments(state: &NetworkState, agent: usize) -> (f64, f64) {
    let (belief, prior) = match (&state.beliefs[agent], &state.prior) {
        (AgentBelief::Natural(n), MergedPrior::Gaussian(p)) => (n, p),
        _ => panic!("gaussian_moments requires the Gaussian natural representation"),
    };
    let mut precision = prior.precision();
    for (i, model) in state.models.iter().enumerate() {
        let AgentModel::Gaussian(g) = model else {
            unreachable!()
        };
        precision += belief.w[i] / (g.sigma * g.sigma);
    }
    let mean = (belief.chi[0] + belief.prior_u[0]) / precision;
    (mean, 1.0 / precision)
}

/// Normalized log-density of agent `agent`'s belief at `theta`. Gaussian
/// natural beliefs use the conjugate closed form; detection natural
/// beliefs integrate the unnormalized density over the unit box; grid
/// beliefs return the nearest lattice node.
pub fn density_at(
    state: &NetworkState,
    agent: usize,
    theta: &DVector<f64>,
) -> Result<f64, BeliefError> {
    match &state.beliefs[agent] {
        AgentBelief::Grid(g) => g.log_density_at(theta),
        AgentBelief::Natural(n) => match &state.prior {
            MergedPrior::Gaussian(_) => {
                let (mean, var) = gaussian_moments(state, agent);
                let z = (theta[0] - mean) / var.sqrt();
                Ok(-0.5 * z * z - 0.5 * var.ln() - LN_SQRT_2PI)
            }
            MergedPrior::UniformBox => {
                let models = detection_models(state);
                if !(0.0..=1.0).contains(&theta[0]) || !(0.0..=1.0).contains(&theta[1]) {
                    return Err(BeliefError::OutOfBox);
                }
                let log_unnorm = detection_log_unnorm(&models, &n.chi, &n.w, theta);
                let log_z = detection_log_normalizer(&models, &n.chi, &n.w)?;
                Ok(log_unnorm - log_z)
            }
        },
    }
}

fn detection_models(state: &NetworkState) -> Vec<DetectionModel> {
    state
        .models
        .iter()
        .map(|m| match m {
            AgentModel::Detection(d) => *d,
            _ => panic!("expected detection models"),
        })
        .collect()
}

/// Unnormalized log-density of a detection natural belief: for each
/// sensor `i`, `chi[i]` is the weighted sum of observed distances and
/// `w[i]` the accumulated weight, so the theta-dependent part is
/// `sum_i chi_i mu_i / sigma_i^2 - w_i (mu_i^2 / (2 sigma_i^2) + log C_i(mu_i))`.
pub fn detection_log_unnorm(
    models: &[DetectionModel],
    chi: &DVector<f64>,
    w: &DVector<f64>,
    theta: &DVector<f64>,
) -> f64 {
    let mut total = 0.0;
    for (i, m) in models.iter().enumerate() {
        if w[i] == 0.0 && chi[i] == 0.0 {
            continue;
        }
        let mu = m.mean_at(theta);
        let s2 = m.sigma * m.sigma;
        total += chi[i] * mu / s2 - w[i] * (mu * mu / (2.0 * s2) + m.log_norm_const(mu));
    }
    total
}

/// Log normalizer of the detection natural belief over `[0,1]^2` by
/// midpoint quadrature on a fine lattice (the integrand is smooth).
fn detection_log_normalizer(
    models: &[DetectionModel],
    chi: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<f64, BeliefError> {
    let n = 400usize;
    let h = 1.0 / n as f64;
    let mut vals = Vec::with_capacity(n * n);
    let mut theta = DVector::zeros(2);
    for ix in 0..n {
        theta[0] = (ix as f64 + 0.5) * h;
        for iy in 0..n {
            theta[1] = (iy as f64 + 0.5) * h;
            vals.push(detection_log_unnorm(models, chi, w, &theta));
        }
    }
    let log_z = crate::numeric::logsumexp(&vals) + (h * h).ln();
    if log_z.is_finite() {
        Ok(log_z)
    } else {
        Err(BeliefError::NonFiniteNormalizer)
    }
}

/// Materializes a detection natural belief on a lattice (for mass and
/// density queries at checkpoints).
pub fn detection_to_grid(
    models: &[DetectionModel],
    belief: &NaturalBelief,
    n_per_dim: usize,
) -> Result<GridBelief, BeliefError> {
    let mut g = GridBelief {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
        n_per_dim,
        logw: vec![0.0; n_per_dim * n_per_dim],
    };
    for i in 0..g.node_count() {
        let node = g.node(i);
        g.logw[i] = detection_log_unnorm(models, &belief.chi, &belief.w, &node);
    }
    g.normalize()?;
    Ok(g)
}

/// The distributed ideal posterior: the posterior under the `1/m`
/// geometric-mean likelihood across agents, from the complete data matrix
/// `data[k][i]` (step `k+1`, agent `i`).
pub fn ideal_posterior(
    models: &[AgentModel],
    prior: &MergedPrior,
    data: &[Vec<Observation>],
) -> Result<AgentBelief, BeliefError> {
    let m = models.len();
    let t = data.len();
    let inv_m = 1.0 / m as f64;
    match prior {
        MergedPrior::Gaussian(p) => {
            let mut chi = DVector::zeros(1);
            for row in data {
                if row.len() != m {
                    return Err(BeliefError::ObservationCount {
                        expected: m,
                        got: row.len(),
                    });
                }
                for (i, obs) in row.iter().enumerate() {
                    let AgentModel::Gaussian(g) = &models[i] else {
                        return Err(BeliefError::RepresentationMismatch);
                    };
                    chi += g.suff_stat(obs) * inv_m;
                }
            }
            Ok(AgentBelief::Natural(NaturalBelief {
                chi,
                w: DVector::from_element(m, t as f64 / m as f64),
                prior_u: DVector::from_element(1, p.u()),
            }))
        }
        MergedPrior::UniformBox => {
            let mut chi = DVector::zeros(m);
            for row in data {
                for (i, obs) in row.iter().enumerate() {
                    chi[i] += obs.scalar() * inv_m;
                }
            }
            Ok(AgentBelief::Natural(NaturalBelief {
                chi,
                w: DVector::from_element(m, t as f64 / m as f64),
                prior_u: DVector::zeros(0),
            }))
        }
    }
}

/// Serializable belief snapshot; JSON round-trips are bit-stable because
/// floats serialize with the shortest representation that parses back to
/// the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub kind: String,
    pub step: u64,
    pub agent: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logw: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
}

pub fn snapshot(state: &NetworkState, agent: usize) -> BeliefSnapshot {
    match &state.beliefs[agent] {
        AgentBelief::Natural(n) => BeliefSnapshot {
            kind: "natural".into(),
            step: state.step,
            agent,
            chi: Some(n.chi.iter().copied().collect()),
            logw: None,
            w: Some(n.w.iter().copied().collect()),
            bounds: None,
        },
        AgentBelief::Grid(g) => BeliefSnapshot {
            kind: "grid".into(),
            step: state.step,
            agent,
            chi: None,
            logw: Some(g.logw.clone()),
            w: None,
            bounds: Some((g.lo.clone(), g.hi.clone())),
        },
    }
}
