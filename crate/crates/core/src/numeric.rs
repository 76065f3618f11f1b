//! Shared numerical kernels: stable normal-tail arithmetic, log-sum-exp,
//! adaptive quadrature and the chi-square quantile.

use libm::erfc;
use statrs::function::gamma::gamma_lr;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7; // ln sqrt(2 pi)
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal log-density.
pub fn normal_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF via erfc, accurate in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// log Phi(z), stable for z far into the left tail.
pub fn normal_logcdf(z: f64) -> f64 {
    let c = 0.5 * erfc(-z * FRAC_1_SQRT_2);
    if c > 1e-280 {
        c.ln()
    } else {
        // asymptotic expansion of the Mills ratio
        normal_logpdf(z) - (-z).ln() + (1.0 - 1.0 / (z * z)).ln_1p().min(0.0)
    }
}

/// log(Phi(hi) - Phi(lo)) for hi > lo, switching to complementary-error
/// tails when the enclosed mass drops below 1e-12.
pub fn log_normal_cdf_diff(lo: f64, hi: f64) -> f64 {
    assert!(hi > lo, "empty standardized interval [{lo}, {hi}]");
    let direct = normal_cdf(hi) - normal_cdf(lo);
    if direct >= 1e-12 {
        return direct.ln();
    }
    // Work in the tail that holds the interval. For an interval in the
    // right tail, Phi(hi) - Phi(lo) = (erfc(lo/s2) - erfc(hi/s2)) / 2.
    let (a, b) = if lo >= 0.0 {
        (lo, hi)
    } else {
        // mirror the left tail
        (-hi, -lo)
    };
    let log_erfc_a = log_erfc(a * FRAC_1_SQRT_2);
    let log_erfc_b = log_erfc(b * FRAC_1_SQRT_2);
    // log( (erfc_a - erfc_b) / 2 ) with erfc_b < erfc_a
    -(2.0f64).ln() + log_erfc_a + (-(log_erfc_b - log_erfc_a).exp()).ln_1p()
}

/// log erfc(x), stable for large positive x.
pub fn log_erfc(x: f64) -> f64 {
    let v = erfc(x);
    if v > 1e-280 {
        v.ln()
    } else {
        // erfc(x) ~ exp(-x^2) / (x sqrt(pi)) * (1 - 1/(2x^2))
        -x * x - x.ln() - 0.5 * std::f64::consts::PI.ln() + (-1.0 / (2.0 * x * x)).ln_1p()
    }
}

/// log(1 + e^eta) without overflow.
pub fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Logistic sigmoid e^eta / (1 + e^eta).
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(sum exp(v)) guarded against overflow; -inf entries are allowed.
pub fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Weighted log-sum-exp: log(sum w_i exp(v_i)) for nonnegative weights.
pub fn logsumexp_weighted(values: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(values.len(), weights.len());
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - m).exp())
        .sum();
    m + s.ln()
}

/// Adaptive Simpson quadrature on [a, b] with relative tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth >= 50 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * eps, depth + 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * eps, depth + 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let eps = tol * whole.abs().max(1e-300);
    recurse(f, a, fa, b, fb, whole, m, fm, eps, 0)
}

/// Nested adaptive Simpson over an axis-aligned rectangle.
pub fn adaptive_simpson_2d(
    f: &dyn Fn(f64, f64) -> f64,
    lo: [f64; 2],
    hi: [f64; 2],
    tol: f64,
) -> f64 {
    let outer = |x: f64| adaptive_simpson(&|y| f(x, y), lo[1], hi[1], tol);
    adaptive_simpson(&outer, lo[0], hi[0], tol)
}

/// Composite Simpson on an even number of panels; used for the fixed-grid
/// total-variation integrals.
pub fn composite_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = if panels % 2 == 0 { panels } else { panels + 1 };
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Regularized lower incomplete gamma P(a, x); the chi-square CDF is
/// P(k/2, x/2).
pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(dof as f64 / 2.0, x / 2.0)
}

/// Chi-square quantile by bisection on the regularized incomplete gamma;
/// the returned q satisfies |P(chi2 <= q) - prob| < 1e-10.
pub fn chi2_quantile(dof: usize, prob: f64) -> f64 {
    assert!((0.0..1.0).contains(&prob), "probability out of range");
    if prob == 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while chi2_cdf(dof, hi) < prob {
        hi *= 2.0;
        assert!(hi < 1e8, "chi-square quantile bracket failed");
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(dof, mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if (chi2_cdf(dof, 0.5 * (lo + hi)) - prob).abs() < 1e-12 && (hi - lo) < 1e-9 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Ordinary least squares slope and intercept of y on x.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Median of a slice (averages the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Kolmogorov-Smirnov distance between a sample and the standard normal.
pub fn ks_distance_to_normal(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let c = normal_cdf(*x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    d
}
