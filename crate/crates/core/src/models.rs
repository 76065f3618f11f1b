//! Private statistical models: a canonical exponential-family interface,
//! Gaussian location with known per-agent scale, logistic regression and
//! the truncated-normal distance model for source detection, together with
//! samplers for the data-generating distribution (correctly specified or
//! not).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::numeric::{log_normal_cdf_diff, normal_cdf, sigmoid, softplus, LN_SQRT_2PI};
use crate::rng::{Purpose, StreamFamily};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("scale parameter must be positive, got {0}")]
    NonpositiveScale(f64),
    #[error("observation {value} outside the support [{lo}, {hi}]")]
    OutOfSupport { value: f64, lo: f64, hi: f64 },
    #[error("truth and model supports are incompatible: {0}")]
    SupportMismatch(String),
    #[error("observation kind does not match the model")]
    ObservationKind,
}

/// One observation. Scalar for the Gaussian and detection models,
/// covariate/label pair for logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Scalar(f64),
    Labeled(LogisticData),
}

impl Observation {
    pub fn scalar(&self) -> f64 {
        match self {
            Observation::Scalar(v) => *v,
            Observation::Labeled(_) => panic!("expected a scalar observation"),
        }
    }

    pub fn labeled(&self) -> &LogisticData {
        match self {
            Observation::Labeled(d) => d,
            Observation::Scalar(_) => panic!("expected a covariate/label observation"),
        }
    }
}

/// A covariate vector with a binary response.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticData {
    pub x: DVector<f64>,
    pub y: bool,
}

/// Canonical exponential family `log p_theta(x) = h(x) + <theta, T(x)> - psi(theta)`.
///
/// The Gaussian location family is expressed in the mean chart: the
/// carrier is chosen so that `T(x) = x / sigma^2` and
/// `psi(theta) = theta^2 / (2 sigma^2)`, which keeps `theta` the mean of
/// the distribution while the triple stays a valid exponential family.
/// All curvature quantities (`hess_psi`) therefore live in the mean chart
/// as well.
pub trait ExpFamily {
    fn dim_theta(&self) -> usize;
    fn dim_stat(&self) -> usize;
    fn suff_stat(&self, x: &Observation) -> DVector<f64>;
    fn log_partition(&self, theta: &DVector<f64>) -> f64;
    fn grad_psi(&self, theta: &DVector<f64>) -> DVector<f64>;
    fn hess_psi(&self, theta: &DVector<f64>) -> DMatrix<f64>;
    fn base_log_density(&self, x: &Observation) -> f64;
    fn supports(&self, theta: &DVector<f64>) -> bool;

    fn log_density(&self, theta: &DVector<f64>, x: &Observation) -> f64 {
        self.base_log_density(x) + theta.dot(&self.suff_stat(x)) - self.log_partition(theta)
    }
}

/// `N(theta, sigma^2)` with known scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLocation {
    pub sigma: f64,
}

/// Builds the Gaussian location model, rejecting nonpositive scales.
pub fn gaussian_location_model(sigma: f64) -> Result<GaussianLocation, ModelError> {
    if sigma <= 0.0 {
        return Err(ModelError::NonpositiveScale(sigma));
    }
    Ok(GaussianLocation { sigma })
}

impl ExpFamily for GaussianLocation {
    fn dim_theta(&self) -> usize {
        1
    }

    fn dim_stat(&self) -> usize {
        1
    }

    fn suff_stat(&self, x: &Observation) -> DVector<f64> {
        DVector::from_element(1, x.scalar() / (self.sigma * self.sigma))
    }

    fn log_partition(&self, theta: &DVector<f64>) -> f64 {
        let th = theta[0];
        th * th / (2.0 * self.sigma * self.sigma)
    }

    fn grad_psi(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, theta[0] / (self.sigma * self.sigma))
    }

    fn hess_psi(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0 / (self.sigma * self.sigma))
    }

    fn base_log_density(&self, x: &Observation) -> f64 {
        let v = x.scalar();
        -v * v / (2.0 * self.sigma * self.sigma) - self.sigma.ln() - LN_SQRT_2PI
    }

    fn supports(&self, _theta: &DVector<f64>) -> bool {
        true
    }
}

/// Logistic regression with standard-normal covariates of dimension `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticModel {
    pub p: usize,
}

/// `<theta, x y> - log(1 + exp(<theta, x>))`, evaluated with the stable
/// softplus branch so it is a total function of its inputs.
pub fn logistic_loglik(theta: &DVector<f64>, d: &LogisticData) -> f64 {
    let eta = theta.dot(&d.x);
    let y = if d.y { 1.0 } else { 0.0 };
    eta * y - softplus(eta)
}

/// A sensor at `z` observing noisy distances to the source, modelled as
/// `N(|theta - z|, sigma^2)` truncated to `[0, |z| + 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionModel {
    pub z: [f64; 2],
    pub sigma: f64,
}

impl DetectionModel {
    pub fn new(z: [f64; 2], sigma: f64) -> Result<Self, ModelError> {
        if sigma <= 0.0 {
            return Err(ModelError::NonpositiveScale(sigma));
        }
        Ok(Self { z, sigma })
    }

    /// Upper end of the truncation interval, `|z| + 1/2`.
    pub fn upper(&self) -> f64 {
        (self.z[0] * self.z[0] + self.z[1] * self.z[1]).sqrt() + 0.5
    }

    /// Distance from `theta` to the sensor.
    pub fn mean_at(&self, theta: &DVector<f64>) -> f64 {
        let dx = theta[0] - self.z[0];
        let dy = theta[1] - self.z[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// `log(Phi(hi) - Phi(lo))` for the standardized truncation interval
    /// at mean `mu`.
    pub fn log_norm_const(&self, mu: f64) -> f64 {
        let lo = -mu / self.sigma;
        let hi = (self.upper() - mu) / self.sigma;
        log_normal_cdf_diff(lo, hi)
    }

    /// `(phi(hi) - phi(lo)) / (Phi(hi) - Phi(lo))` at mean `mu`; the
    /// derivative of the log normalizer is `-ratio / sigma`.
    pub fn norm_ratio(&self, mu: f64) -> f64 {
        let lo = -mu / self.sigma;
        let hi = (self.upper() - mu) / self.sigma;
        let log_c = log_normal_cdf_diff(lo, hi);
        (normal_logpdf_exp(hi, log_c) - normal_logpdf_exp(lo, log_c)).clamp(-1e12, 1e12)
    }

    /// First and second mu-derivatives of the log normalizer.
    pub fn log_norm_const_derivs(&self, mu: f64) -> (f64, f64) {
        let s = self.sigma;
        let lo = -mu / s;
        let hi = (self.upper() - mu) / s;
        let log_c = log_normal_cdf_diff(lo, hi);
        let phi_hi_over_c = normal_logpdf_exp(hi, log_c);
        let phi_lo_over_c = normal_logpdf_exp(lo, log_c);
        let g = phi_hi_over_c - phi_lo_over_c;
        let first = -g / s;
        let second = ((lo * phi_lo_over_c - hi * phi_hi_over_c) - g * g) / (s * s);
        (first, second)
    }

    /// d/dmu and d^2/dmu^2 of the log density at a fixed observation.
    pub fn mu_score(&self, mu: f64, x_dist: f64) -> (f64, f64) {
        let s2 = self.sigma * self.sigma;
        let (dc1, dc2) = self.log_norm_const_derivs(mu);
        ((x_dist - mu) / s2 - dc1, -1.0 / s2 - dc2)
    }
}

/// phi(z) / exp(log_c), computed in log space to survive extreme tails.
fn normal_logpdf_exp(z: f64, log_c: f64) -> f64 {
    (crate::numeric::normal_logpdf(z) - log_c).exp()
}

/// Log density of the observed distance under the truncated-normal model.
/// The `Phi` difference in the normalizer switches to complementary-error
/// tails when the enclosed mass is below 1e-12.
pub fn detection_loglik(
    theta: &DVector<f64>,
    x_dist: f64,
    model: &DetectionModel,
) -> Result<f64, ModelError> {
    let hi = model.upper();
    if !(0.0..=hi).contains(&x_dist) {
        return Err(ModelError::OutOfSupport {
            value: x_dist,
            lo: 0.0,
            hi,
        });
    }
    let mu = model.mean_at(theta);
    let z = (x_dist - mu) / model.sigma;
    Ok(-0.5 * z * z - LN_SQRT_2PI - model.sigma.ln() - model.log_norm_const(mu))
}

/// One agent's private model.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentModel {
    Gaussian(GaussianLocation),
    Logistic(LogisticModel),
    Detection(DetectionModel),
}

impl AgentModel {
    pub fn dim_theta(&self) -> usize {
        match self {
            AgentModel::Gaussian(_) => 1,
            AgentModel::Logistic(m) => m.p,
            AgentModel::Detection(_) => 2,
        }
    }

    pub fn log_density(&self, theta: &DVector<f64>, obs: &Observation) -> Result<f64, ModelError> {
        match (self, obs) {
            (AgentModel::Gaussian(g), Observation::Scalar(_)) => Ok(g.log_density(theta, obs)),
            (AgentModel::Logistic(_), Observation::Labeled(d)) => Ok(logistic_loglik(theta, d)),
            (AgentModel::Detection(m), Observation::Scalar(d)) => detection_loglik(theta, *d, m),
            _ => Err(ModelError::ObservationKind),
        }
    }
}

/// What the data stream actually is.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthKind {
    /// Each agent samples from its own model at `theta0`.
    Correct { theta0: DVector<f64> },
    /// Gaussian location truth with scale `sigma0` while agents keep their
    /// assumed scales; the smallest misspecified case with closed-form KL.
    MisspecifiedScale { theta0: DVector<f64>, sigma0: f64 },
}

/// The data-generating distribution together with the per-replication
/// stream seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueDistribution {
    pub kind: TruthKind,
    pub seed: u64,
}

impl TrueDistribution {
    pub fn correct(theta0: DVector<f64>, seed: u64) -> Self {
        Self {
            kind: TruthKind::Correct { theta0 },
            seed,
        }
    }

    pub fn misspecified_scale(theta0: DVector<f64>, sigma0: f64, seed: u64) -> Self {
        Self {
            kind: TruthKind::MisspecifiedScale { theta0, sigma0 },
            seed,
        }
    }

    pub fn theta0(&self) -> &DVector<f64> {
        match &self.kind {
            TruthKind::Correct { theta0 } => theta0,
            TruthKind::MisspecifiedScale { theta0, .. } => theta0,
        }
    }
}

/// Inverse-CDF draw from `N(mu, sigma^2)` truncated to `[0, upper]`.
fn sample_truncated_normal(mu: f64, sigma: f64, upper: f64, rng: &mut impl Rng) -> f64 {
    let std = Normal::new(0.0, 1.0).unwrap();
    let c_lo = normal_cdf(-mu / sigma);
    let c_hi = normal_cdf((upper - mu) / sigma);
    let u: f64 = rng.gen();
    let v = c_lo + u * (c_hi - c_lo);
    let x = mu + sigma * std.inverse_cdf(v.clamp(1e-300, 1.0 - 1e-16));
    x.clamp(0.0, upper)
}

/// An i.i.d. draw for `(agent, step)`. Identical inputs give identical
/// draws regardless of evaluation order.
pub fn sample_observation(
    model: &AgentModel,
    truth: &TrueDistribution,
    agent: usize,
    step: u64,
) -> Observation {
    let fam = StreamFamily::new(truth.seed, 0);
    let mut rng = fam.rng(agent as u64, step, Purpose::Observation);
    match (model, &truth.kind) {
        (AgentModel::Gaussian(g), TruthKind::Correct { theta0 }) => {
            let z: f64 = rng.sample(StandardNormal);
            Observation::Scalar(theta0[0] + g.sigma * z)
        }
        (AgentModel::Gaussian(_), TruthKind::MisspecifiedScale { theta0, sigma0 }) => {
            let z: f64 = rng.sample(StandardNormal);
            Observation::Scalar(theta0[0] + sigma0 * z)
        }
        (AgentModel::Logistic(m), TruthKind::Correct { theta0 }) => {
            let x = DVector::from_fn(m.p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = rng.gen::<f64>() < sigmoid(theta0.dot(&x));
            Observation::Labeled(LogisticData { x, y })
        }
        (AgentModel::Detection(m), TruthKind::Correct { theta0 }) => {
            let mu = m.mean_at(theta0);
            Observation::Scalar(sample_truncated_normal(mu, m.sigma, m.upper(), &mut rng))
        }
        _ => panic!("truth kind not defined for this model"),
    }
}

/// A divergence estimate; `stderr` is reported for Monte-Carlo values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    pub value: f64,
    pub stderr: Option<f64>,
}

/// `KL(N(mu0, v0) || N(mu1, v1))`.
pub fn gaussian_kl(mu0: f64, var0: f64, mu1: f64, var1: f64) -> f64 {
    0.5 * (var0 / var1 + (mu1 - mu0) * (mu1 - mu0) / var1 - 1.0 + (var1 / var0).ln())
}

const KL_MC_DRAWS: usize = 20_000;

/// `KL(P0 || P_theta^j)` between the data-generating distribution and the
/// model at `theta`. Gaussian pairs use the closed form; detection and
/// logistic pairs are estimated by Monte Carlo with a reported standard
/// error.
pub fn kl_to_model(
    truth: &TrueDistribution,
    model: &AgentModel,
    theta: &DVector<f64>,
) -> Result<KlEstimate, ModelError> {
    match (model, &truth.kind) {
        (AgentModel::Gaussian(g), TruthKind::Correct { theta0 }) => Ok(KlEstimate {
            value: gaussian_kl(theta0[0], g.sigma * g.sigma, theta[0], g.sigma * g.sigma),
            stderr: None,
        }),
        (AgentModel::Gaussian(g), TruthKind::MisspecifiedScale { theta0, sigma0 }) => {
            Ok(KlEstimate {
                value: gaussian_kl(theta0[0], sigma0 * sigma0, theta[0], g.sigma * g.sigma),
                stderr: None,
            })
        }
        (AgentModel::Logistic(_) | AgentModel::Detection(_), TruthKind::Correct { .. }) => {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for i in 0..KL_MC_DRAWS {
                let x = sample_observation(model, truth, usize::MAX - 1, i as u64);
                let support_err =
                    |_| ModelError::SupportMismatch("truth draw outside model support".into());
                let l0 = self_density(model, truth.theta0(), &x).map_err(support_err)?;
                let l1 = self_density(model, theta, &x).map_err(support_err)?;
                let v = l0 - l1;
                sum += v;
                sum_sq += v * v;
            }
            let n = KL_MC_DRAWS as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            Ok(KlEstimate {
                value: mean,
                stderr: Some((var / n).sqrt()),
            })
        }
        _ => Err(ModelError::SupportMismatch(
            "misspecified-scale truth is defined for the Gaussian model only".into(),
        )),
    }
}

fn self_density(
    model: &AgentModel,
    theta: &DVector<f64>,
    x: &Observation,
) -> Result<f64, ModelError> {
    model.log_density(theta, x)
}

/// Serializes logistic observations with the header `x1,...,xp,y`.
pub fn logistic_to_csv(data: &[LogisticData]) -> String {
    use std::fmt::Write as _;
    let p = data.first().map_or(0, |d| d.x.len());
    let mut out = String::new();
    for i in 1..=p {
        let _ = write!(out, "x{i},");
    }
    out.push_str("y\n");
    for d in data {
        for v in d.x.iter() {
            let _ = write!(out, "{v:.16e},");
        }
        let _ = writeln!(out, "{}", if d.y { 1 } else { 0 });
    }
    out
}

/// Parses the `x1,...,xp,y` CSV produced by [`logistic_to_csv`].
pub fn logistic_from_csv(text: &str) -> Result<Vec<LogisticData>, ModelError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or(ModelError::SupportMismatch("empty csv".into()))?;
    let p = header.split(',').count() - 1;
    let mut out = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 1 {
            return Err(ModelError::SupportMismatch(format!(
                "expected {} fields, got {}",
                p + 1,
                fields.len()
            )));
        }
        let x = DVector::from_iterator(
            p,
            fields[..p]
                .iter()
                .map(|f| f.parse::<f64>().unwrap_or(f64::NAN)),
        );
        let y = match fields[p].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(ModelError::SupportMismatch(format!(
                    "label must be 0/1, got {other}"
                )))
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::SupportMismatch("non-finite covariate".into()));
        }
        out.push(LogisticData { x, y });
    }
    Ok(out)
}
