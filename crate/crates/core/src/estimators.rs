//! M-estimators for the surrogate losses, average Fisher information,
//! Laplace approximations and chi-square credible regions.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::belief::{gaussian_moments, AgentBelief, NaturalBelief, NetworkState};
use crate::models::{AgentModel, DetectionModel, ExpFamily, LogisticData};
use crate::numeric::{chi2_quantile, sigmoid};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("Hessian is not positive definite")]
    IndefiniteHessian,
    #[error("average Fisher information is singular (condition number > 1e12)")]
    SingularFisher,
    #[error("logistic Fisher information needs the covariate histories")]
    NeedsData,
}

/// Result of minimizing a surrogate loss. A non-converged estimate is
/// returned with `converged = false` rather than an error, so finite-
/// sample pathologies (logistic separation) stay visible.
#[derive(Debug, Clone, PartialEq)]
pub struct MEstimate {
    pub theta_hat: DVector<f64>,
    pub grad_norm: f64,
    pub iters: u32,
    pub converged: bool,
}

/// A twice-differentiable loss to minimize.
pub trait SurrogateLoss {
    fn dim(&self) -> usize;
    fn value(&self, theta: &DVector<f64>) -> f64;
    fn grad(&self, theta: &DVector<f64>) -> DVector<f64>;
    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64>;
}

const NEWTON_MAX_ITERS: u32 = 100;
const NEWTON_GRAD_TOL: f64 = 1e-10;
const DIVERGENCE_NORM: f64 = 1e6;

/// Damped Newton with step halving on the loss value. Stops when the
/// gradient norm drops below `1e-10 (1 + |f|)` or after 100 iterations;
/// iterates escaping past norm 1e6 (logistic separation) return the best
/// iterate with `converged = false`.
pub fn m_estimate(
    loss: &dyn SurrogateLoss,
    theta_init: &DVector<f64>,
) -> Result<MEstimate, EstimatorError> {
    let mut theta = theta_init.clone();
    let mut value = loss.value(&theta);
    let mut best = theta.clone();
    let mut best_grad_norm = f64::INFINITY;
    for iters in 0..NEWTON_MAX_ITERS {
        let grad = loss.grad(&theta);
        let grad_norm = grad.norm();
        if grad_norm < best_grad_norm {
            best_grad_norm = grad_norm;
            best = theta.clone();
        }
        let hess = loss.hess(&theta);
        let chol = Cholesky::new(hess).ok_or(EstimatorError::IndefiniteHessian)?;
        let step = chol.solve(&(-&grad));
        if grad_norm < NEWTON_GRAD_TOL * (1.0 + value.abs()) {
            // A separated logistic loss goes numerically flat along a ray:
            // the gradient underflows while the Newton step stays order
            // one. A genuine minimum also has a vanishing Newton step.
            let converged = step.norm() <= 1e-4 * (1.0 + theta.norm());
            return Ok(MEstimate {
                theta_hat: theta,
                grad_norm,
                iters,
                converged,
            });
        }
        // Inside the quadratic basin the loss differences sink below
        // double-precision resolution before the gradient does; take the
        // full Newton step without a value comparison there.
        let quadratic_basin =
            grad_norm < 1e-6 * (1.0 + value.abs()) && step.norm() < 1e-3 * (1.0 + theta.norm());
        let mut scale = 1.0;
        let mut accepted = false;
        if quadratic_basin {
            theta += &step;
            value = loss.value(&theta);
            accepted = true;
        }
        for _ in 0..40 {
            if accepted {
                break;
            }
            let candidate = &theta + &step * scale;
            let cand_value = loss.value(&candidate);
            if cand_value <= value {
                theta = candidate;
                value = cand_value;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || theta.norm() > DIVERGENCE_NORM {
            return Ok(MEstimate {
                theta_hat: best,
                grad_norm: best_grad_norm,
                iters,
                converged: false,
            });
        }
    }
    Ok(MEstimate {
        theta_hat: best,
        grad_norm: best_grad_norm,
        iters: NEWTON_MAX_ITERS,
        converged: false,
    })
}

/// Closed-form M-estimate for the Gaussian natural belief: the mean-map
/// inverse `theta = chi / sum_i w[i] / sigma_i^2` (prior excluded).
pub fn gaussian_m_estimate(state: &NetworkState, agent: usize) -> MEstimate {
    let AgentBelief::Natural(belief) = &state.beliefs[agent] else {
        panic!("gaussian_m_estimate requires a natural belief");
    };
    let mut denom = 0.0;
    for (i, model) in state.models.iter().enumerate() {
        let AgentModel::Gaussian(g) = model else {
            panic!("gaussian_m_estimate requires Gaussian models");
        };
        denom += belief.w[i] / (g.sigma * g.sigma);
    }
    MEstimate {
        theta_hat: DVector::from_element(1, belief.chi[0] / denom),
        grad_norm: 0.0,
        iters: 0,
        converged: true,
    }
}

/// Graph-weighted logistic surrogate loss
/// `f(theta) = -(1/t) sum_n w_n (<theta, x_n y_n> - softplus(<theta, x_n>))`.
pub struct LogisticSurrogateLoss {
    items: Vec<(f64, LogisticData)>,
    t: f64,
    dim: usize,
}

impl LogisticSurrogateLoss {
    /// `items` are (weight, observation) pairs; `t` the per-agent step
    /// count that normalizes the loss.
    pub fn new(items: Vec<(f64, LogisticData)>, t: f64) -> Self {
        let dim = items.first().map_or(1, |(_, d)| d.x.len());
        Self { items, t, dim }
    }
}

impl SurrogateLoss for LogisticSurrogateLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for (w, d) in &self.items {
            total += w * crate::models::logistic_loglik(theta, d);
        }
        -total / self.t
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for (w, d) in &self.items {
            let eta = theta.dot(&d.x);
            let y = if d.y { 1.0 } else { 0.0 };
            g += &d.x * (w * (sigmoid(eta) - y));
        }
        g / self.t
    }

    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (w, d) in &self.items {
            let s = sigmoid(theta.dot(&d.x));
            let c = w * s * (1.0 - s);
            h += &d.x * d.x.transpose() * c;
        }
        h / self.t
    }
}

/// Quadratic test loss `0.5 |theta - target|^2`.
pub struct QuadraticLoss {
    pub target: DVector<f64>,
}

impl SurrogateLoss for QuadraticLoss {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        0.5 * (theta - &self.target).norm_squared()
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        theta - &self.target
    }

    fn hess(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.target.len(), self.target.len())
    }
}

/// Detection surrogate loss evaluated from the collapsed per-sensor
/// statistics (weighted distance sums `chi` and weights `w`); gradients
/// and Hessians are analytic in the truncated-normal log-density.
pub struct DetectionSurrogateLoss {
    pub models: Vec<DetectionModel>,
    pub chi: DVector<f64>,
    pub w: DVector<f64>,
    pub t: f64,
}

impl DetectionSurrogateLoss {
    pub fn from_belief(models: &[DetectionModel], belief: &NaturalBelief, t: f64) -> Self {
        Self {
            models: models.to_vec(),
            chi: belief.chi.clone(),
            w: belief.w.clone(),
            t,
        }
    }

    /// Distance guarded away from zero so the direction vector stays
    /// defined at a sensor location.
    fn mu_and_dir(&self, i: usize, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let m = &self.models[i];
        let d = DVector::from_vec(vec![theta[0] - m.z[0], theta[1] - m.z[1]]);
        let mu = d.norm().max(1e-9);
        (mu, d / mu)
    }
}

impl SurrogateLoss for DetectionSurrogateLoss {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        -crate::belief::detection_log_unnorm(&self.models, &self.chi, &self.w, theta) / self.t
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(2);
        for i in 0..self.models.len() {
            if self.w[i] == 0.0 && self.chi[i] == 0.0 {
                continue;
            }
            let m = &self.models[i];
            let (mu, u) = self.mu_and_dir(i, theta);
            let s2 = m.sigma * m.sigma;
            let (dc1, _) = m.log_norm_const_derivs(mu);
            // d/dmu of the log-unnormalized belief contribution
            let a = self.chi[i] / s2 - self.w[i] * (mu / s2 + dc1);
            g += u * (-a);
        }
        g / self.t
    }

    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(2, 2);
        let eye = DMatrix::identity(2, 2);
        for i in 0..self.models.len() {
            if self.w[i] == 0.0 && self.chi[i] == 0.0 {
                continue;
            }
            let m = &self.models[i];
            let (mu, u) = self.mu_and_dir(i, theta);
            let s2 = m.sigma * m.sigma;
            let (dc1, dc2) = m.log_norm_const_derivs(mu);
            let a = self.chi[i] / s2 - self.w[i] * (mu / s2 + dc1);
            let da = -self.w[i] * (1.0 / s2 + dc2);
            let uut = &u * u.transpose();
            h += &uut * (-da) + (&eye - &uut) * (-a / mu);
        }
        h / self.t
    }
}

/// `(1/m) sum_i V^i(theta)`: exponential families use the log-partition
/// curvature, logistic regression the empirical `X' W(theta) X / t` form
/// (covariate histories required), and detection the closed-form
/// score-ratio expression of its truncated-normal family.
pub fn average_fisher(
    models: &[AgentModel],
    theta: &DVector<f64>,
    logistic_histories: Option<&[Vec<LogisticData>]>,
) -> Result<DMatrix<f64>, EstimatorError> {
    let m = models.len() as f64;
    let p = models[0].dim_theta();
    let mut v = DMatrix::zeros(p, p);
    for (i, model) in models.iter().enumerate() {
        match model {
            AgentModel::Gaussian(g) => v += g.hess_psi(theta),
            AgentModel::Detection(d) => v += detection_fisher_term(d, theta),
            AgentModel::Logistic(_) => {
                let hist = logistic_histories.ok_or(EstimatorError::NeedsData)?;
                let rows = &hist[i];
                let t = rows.len() as f64;
                let mut vi = DMatrix::zeros(p, p);
                for d in rows {
                    let s = sigmoid(theta.dot(&d.x));
                    vi += &d.x * d.x.transpose() * (s * (1.0 - s));
                }
                v += vi / t;
            }
        }
    }
    v /= m;
    check_condition(&v)?;
    Ok(v)
}

/// Per-sensor term of the detection average Fisher matrix:
/// `u u' / sigma^4 * [(phi(hi) - phi(lo)) / (Phi(hi) - Phi(lo))]^2` with
/// `u` the unit vector from the sensor to `theta`.
fn detection_fisher_term(model: &DetectionModel, theta: &DVector<f64>) -> DMatrix<f64> {
    let d = DVector::from_vec(vec![theta[0] - model.z[0], theta[1] - model.z[1]]);
    let mu = d.norm().max(1e-9);
    let u = d / mu;
    let ratio = model.norm_ratio(mu);
    let s2 = model.sigma * model.sigma;
    &u * u.transpose() * (ratio * ratio / (s2 * s2))
}

fn check_condition(v: &DMatrix<f64>) -> Result<(), EstimatorError> {
    let svd = v.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !min.is_finite() || min <= 0.0 || max / min > 1e12 {
        return Err(EstimatorError::SingularFisher);
    }
    Ok(())
}

/// Gaussian limit of the centred, rescaled posterior: mean `center`,
/// covariance `fisher^{-1} / t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceApprox {
    pub center: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub fisher: DMatrix<f64>,
}

impl LaplaceApprox {
    pub fn new(center: DVector<f64>, fisher: DMatrix<f64>, t: f64) -> Result<Self, EstimatorError> {
        let sym = (&fisher + fisher.transpose()) / 2.0;
        let chol = Cholesky::new(sym.clone()).ok_or(EstimatorError::IndefiniteHessian)?;
        let covariance = chol.inverse() / t;
        Ok(Self {
            center,
            covariance,
            fisher: sym,
        })
    }
}

/// Ellipsoid `{theta : (center - theta)' V (center - theta) <= chi2_{alpha,p} / t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibleRegion {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub radius_sq: f64,
    pub alpha: f64,
}

impl CredibleRegion {
    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        let d = &self.center - theta;
        (d.transpose() * &self.shape * &d)[(0, 0)] <= self.radius_sq
    }
}

/// Level `1 - alpha` region from a Laplace approximation; the chi-square
/// quantile is found by bisection on the regularized incomplete gamma to
/// 1e-10.
pub fn credible_region(laplace: &LaplaceApprox, alpha: f64, t: f64) -> CredibleRegion {
    let p = laplace.center.len();
    let q = chi2_quantile(p, 1.0 - alpha);
    CredibleRegion {
        center: laplace.center.clone(),
        shape: laplace.fisher.clone(),
        radius_sq: q / t,
        alpha,
    }
}

/// Detection M-estimate: coarse lattice argmin over `[0,1]^2` (ties break
/// to the lowest linear index) followed by a box-projected Newton polish.
/// The boundary flag reports a minimizer pinned to the boundary.
pub fn detection_m_estimate(
    loss: &DetectionSurrogateLoss,
    grid_per_dim: usize,
) -> (MEstimate, bool) {
    let n = grid_per_dim.max(2);
    let h = 1.0 / (n - 1) as f64;
    let mut best_idx = 0usize;
    let mut best_val = f64::INFINITY;
    let mut theta = DVector::zeros(2);
    for ix in 0..n {
        for iy in 0..n {
            theta[0] = ix as f64 * h;
            theta[1] = iy as f64 * h;
            let v = loss.value(&theta);
            if v < best_val {
                best_val = v;
                best_idx = ix * n + iy;
            }
        }
    }
    let mut current = DVector::from_vec(vec![(best_idx / n) as f64 * h, (best_idx % n) as f64 * h]);
    let clamp = |v: &mut DVector<f64>| {
        v[0] = v[0].clamp(0.0, 1.0);
        v[1] = v[1].clamp(0.0, 1.0);
    };

    let mut value = loss.value(&current);
    let mut grad_norm = loss.grad(&current).norm();
    let mut iters = 0u32;
    let mut converged = false;
    for it in 0..NEWTON_MAX_ITERS {
        iters = it;
        let grad = loss.grad(&current);
        grad_norm = grad.norm();
        if grad_norm < NEWTON_GRAD_TOL * (1.0 + value.abs()) {
            converged = true;
            break;
        }
        let mut hess = loss.hess(&current);
        // ridge until factorizable; keeps the polish a descent method
        let mut chol = Cholesky::new(hess.clone());
        let mut ridge = 1e-8;
        while chol.is_none() && ridge < 1e6 {
            hess += DMatrix::identity(2, 2) * ridge;
            chol = Cholesky::new(hess.clone());
            ridge *= 10.0;
        }
        let Some(chol) = chol else { break };
        let step = chol.solve(&(-&grad));
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let mut cand = &current + &step * scale;
            clamp(&mut cand);
            let cv = loss.value(&cand);
            if cv < value - 1e-18 {
                current = cand;
                value = cv;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            // stationary under projection (possibly a boundary minimum)
            converged = grad_norm < 1e-6 * (1.0 + value.abs());
            break;
        }
    }
    let boundary = current[0] <= 0.0 || current[0] >= 1.0 || current[1] <= 0.0 || current[1] >= 1.0;
    (
        MEstimate {
            theta_hat: current,
            grad_norm,
            iters,
            converged,
        },
        boundary,
    )
}

/// M-estimate from the Gaussian natural belief, packaged with its Laplace
/// approximation.
pub fn gaussian_laplace(state: &NetworkState, agent: usize, t: f64) -> LaplaceApprox {
    let est = gaussian_m_estimate(state, agent);
    let theta = est.theta_hat.clone();
    let fisher = average_fisher(&state.models, &theta, None).expect("Gaussian Fisher is scalar");
    LaplaceApprox::new(theta, fisher, t).expect("Gaussian Fisher is positive")
}

/// Posterior mean and variance of a Gaussian agent, re-exported for
/// diagnostics.
pub fn gaussian_posterior_moments(state: &NetworkState, agent: usize) -> (f64, f64) {
    gaussian_moments(state, agent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{distributed_update, GaussianPrior, NetworkState};
    use crate::graph::AdjacencyMatrix;
    use crate::models::{gaussian_location_model, LogisticData, Observation};
    use crate::numeric::chi2_cdf;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn quadratic_loss_converges_in_one_step() {
        let loss = QuadraticLoss {
            target: DVector::from_element(1, 3.0),
        };
        let est = m_estimate(&loss, &DVector::zeros(1)).unwrap();
        assert!(est.converged);
        assert!(est.iters <= 1);
        assert_relative_eq!(est.theta_hat[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_closed_form_m_estimate() {
        let models = vec![AgentModel::Gaussian(gaussian_location_model(1.0).unwrap())];
        let mut state = NetworkState::new_gaussian(models, &[GaussianPrior { mean: 0.0, sd: 1.0 }]);
        let a = AdjacencyMatrix::identity(1);
        for x in [1.0, 3.0] {
            distributed_update(&mut state, &[Observation::Scalar(x)], &a).unwrap();
        }
        let est = gaussian_m_estimate(&state, 0);
        // chi/t = (1 + 3)/2, prior excluded
        assert_relative_eq!(est.theta_hat[0], 2.0, epsilon = 1e-13);
    }

    #[test]
    fn perfect_separation_reports_no_convergence() {
        let data = LogisticData {
            x: DVector::from_element(1, 1.0),
            y: true,
        };
        let loss = LogisticSurrogateLoss::new(vec![(1.0, data)], 1.0);
        let est = m_estimate(&loss, &DVector::zeros(1)).unwrap();
        assert!(!est.converged);
    }

    #[test]
    fn logistic_loss_derivatives_match_finite_differences() {
        let items = vec![
            (
                1.0,
                LogisticData {
                    x: DVector::from_vec(vec![0.4, -1.2]),
                    y: true,
                },
            ),
            (
                0.7,
                LogisticData {
                    x: DVector::from_vec(vec![-0.3, 0.8]),
                    y: false,
                },
            ),
            (
                1.3,
                LogisticData {
                    x: DVector::from_vec(vec![1.5, 0.1]),
                    y: true,
                },
            ),
        ];
        let loss = LogisticSurrogateLoss::new(items, 3.0);
        let theta = DVector::from_vec(vec![0.3, -0.5]);
        let g = loss.grad(&theta);
        let h = loss.hess(&theta);
        let eps = 1e-6;
        for k in 0..2 {
            let mut tp = theta.clone();
            tp[k] += eps;
            let mut tm = theta.clone();
            tm[k] -= eps;
            let fd = (loss.value(&tp) - loss.value(&tm)) / (2.0 * eps);
            assert_relative_eq!(g[k], fd, epsilon = 1e-8, max_relative = 1e-6);
            let gd = (loss.grad(&tp) - loss.grad(&tm)) / (2.0 * eps);
            for l in 0..2 {
                assert_relative_eq!(h[(l, k)], gd[l], epsilon = 1e-6, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn average_fisher_gaussian_agents() {
        let models: Vec<AgentModel> = [1.0, 1.0]
            .iter()
            .map(|&s| AgentModel::Gaussian(gaussian_location_model(s).unwrap()))
            .collect();
        let v = average_fisher(&models, &DVector::zeros(1), None).unwrap();
        assert_relative_eq!(v[(0, 0)], 1.0, epsilon = 1e-14);

        let models: Vec<AgentModel> = [1.0, 2.0]
            .iter()
            .map(|&s| AgentModel::Gaussian(gaussian_location_model(s).unwrap()))
            .collect();
        let v = average_fisher(&models, &DVector::zeros(1), None).unwrap();
        assert_relative_eq!(v[(0, 0)], 0.625, epsilon = 1e-14);
    }

    #[test]
    fn average_fisher_logistic_at_zero() {
        // W entries all 1/4 at theta = 0: V = (1/4m) sum X'X / t
        let hist: Vec<Vec<LogisticData>> = vec![
            vec![
                LogisticData {
                    x: DVector::from_vec(vec![1.0, 0.0]),
                    y: true,
                },
                LogisticData {
                    x: DVector::from_vec(vec![0.0, 2.0]),
                    y: false,
                },
            ],
            vec![
                LogisticData {
                    x: DVector::from_vec(vec![1.0, 1.0]),
                    y: true,
                },
                LogisticData {
                    x: DVector::from_vec(vec![1.0, -1.0]),
                    y: false,
                },
            ],
        ];
        let models = vec![
            AgentModel::Logistic(crate::models::LogisticModel { p: 2 }),
            AgentModel::Logistic(crate::models::LogisticModel { p: 2 }),
        ];
        let v = average_fisher(&models, &DVector::zeros(2), Some(&hist)).unwrap();
        let mut expected = DMatrix::zeros(2, 2);
        for rows in &hist {
            let mut xi = DMatrix::zeros(2, 2);
            for d in rows {
                xi += &d.x * d.x.transpose();
            }
            expected += xi * 0.25 / rows.len() as f64;
        }
        expected /= 2.0;
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(v[(i, j)], expected[(i, j)], epsilon = 1e-13);
            }
        }
        assert!(average_fisher(&models, &DVector::zeros(2), None).is_err());
    }

    #[test]
    fn credible_region_radius_and_membership() {
        let laplace =
            LaplaceApprox::new(DVector::zeros(2), DMatrix::identity(2, 2), 100.0).unwrap();
        let region = credible_region(&laplace, 0.05, 100.0);
        assert_relative_eq!(region.radius_sq * 100.0, 5.991464547107979, epsilon = 1e-8);
        assert!(region.contains(&DVector::zeros(2)));
        // analytic mass identity: chi2 cdf of radius_sq * t equals 1 - alpha
        assert!((chi2_cdf(2, region.radius_sq * 100.0) - 0.95).abs() < 1e-6);
        // membership along an eigenvector
        let r = region.radius_sq.sqrt();
        assert!(region.contains(&DVector::from_vec(vec![0.9 * r, 0.0])));
        assert!(!region.contains(&DVector::from_vec(vec![1.1 * r, 0.0])));
        // alpha -> 1 shrinks to the center
        let tiny = credible_region(&laplace, 1.0 - 1e-12, 100.0);
        assert!(tiny.radius_sq < 1e-10);
    }

    #[test]
    fn detection_loss_derivatives_match_finite_differences() {
        let models = vec![
            DetectionModel::new([0.1, 0.1], 0.1).unwrap(),
            DetectionModel::new([0.25, 0.05], 0.1).unwrap(),
        ];
        let loss = DetectionSurrogateLoss {
            models,
            chi: DVector::from_vec(vec![2.3, 1.9]),
            w: DVector::from_vec(vec![4.0, 4.2]),
            t: 4.1,
        };
        let theta = DVector::from_vec(vec![0.55, 0.42]);
        let g = loss.grad(&theta);
        let h = loss.hess(&theta);
        let eps = 1e-6;
        for k in 0..2 {
            let mut tp = theta.clone();
            tp[k] += eps;
            let mut tm = theta.clone();
            tm[k] -= eps;
            let fd = (loss.value(&tp) - loss.value(&tm)) / (2.0 * eps);
            assert_relative_eq!(g[k], fd, epsilon = 1e-6, max_relative = 1e-5);
            let gd = (loss.grad(&tp) - loss.grad(&tm)) / (2.0 * eps);
            for l in 0..2 {
                assert_relative_eq!(h[(l, k)], gd[l], epsilon = 1e-5, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn detection_noiseless_single_sensor_recovers_radius() {
        // Sensor at the origin, all distances identically r with r well
        // inside the truncation interval: the minimizer set is the arc
        // |theta| = r. (At r equal to the truncation edge the truncated
        // MLE diverges, so the clean geometry needs an interior radius.)
        let r0 = 0.25;
        let model = DetectionModel::new([0.0, 0.0], 0.01).unwrap();
        let t = 40.0;
        let loss = DetectionSurrogateLoss {
            models: vec![model],
            chi: DVector::from_element(1, r0 * t),
            w: DVector::from_element(1, t),
            t,
        };
        let (est, _boundary) = detection_m_estimate(&loss, 60);
        let r = est.theta_hat.norm();
        assert!((r - r0).abs() < 1e-6, "|theta| = {r}");
    }

    #[test]
    fn detection_noiseless_trilateration_recovers_theta0() {
        let sensors = [[0.1, 0.1], [0.8, 0.2], [0.3, 0.9]];
        let theta0 = DVector::from_vec(vec![0.55, 0.45]);
        let models: Vec<DetectionModel> = sensors
            .iter()
            .map(|&z| DetectionModel::new(z, 0.01).unwrap())
            .collect();
        let t = 25.0;
        let chi = DVector::from_iterator(3, models.iter().map(|m| m.mean_at(&theta0) * t));
        let loss = DetectionSurrogateLoss {
            models,
            chi,
            w: DVector::from_element(3, t),
            t,
        };
        let (est, boundary) = detection_m_estimate(&loss, 40);
        assert!(!boundary);
        assert!((est.theta_hat - &theta0).norm() < 1e-6);
    }

    #[test]
    fn detection_prior_only_flags_boundary() {
        let model = DetectionModel::new([0.3, 0.3], 0.1).unwrap();
        let loss = DetectionSurrogateLoss {
            models: vec![model],
            chi: DVector::zeros(1),
            w: DVector::zeros(1),
            t: 1.0,
        };
        let (est, boundary) = detection_m_estimate(&loss, 21);
        assert!(boundary);
        // constant loss: tie-break keeps the lowest linear index (0, 0)
        assert_eq!(est.theta_hat, DVector::zeros(2));
    }
}
