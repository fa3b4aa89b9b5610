//! Special functions. Gamma/beta families come from `statrs`; the pieces it
//! lacks (trigamma, stable log-sum-exp, normal quantile wrapper, discrete
//! log-pmfs) live here.

use std::f64::consts::{PI, SQRT_2};

pub use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};
pub use statrs::function::gamma::{digamma, gamma_lr, gamma_ur, ln_gamma};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Trigamma function ψ₁(x) = d²/dx² log Γ(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x < 1e-6 {
        // ψ₁(x) ≈ 1/x² + π²/6
        return 1.0 / (x * x) + PI * PI / 6.0;
    }
    let mut acc = 0.0;
    let mut z = x;
    while z < 12.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let r = 1.0 / z;
    let r2 = r * r;
    // Asymptotic series with Bernoulli numbers B2..B12.
    let series = r
        + 0.5 * r2
        + r * r2
            * (1.0 / 6.0
                - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 * (1.0 / 30.0 - r2 * (5.0 / 66.0 - r2 * 691.0 / 2730.0)))));
    acc + series
}

/// log(Σ exp(xᵢ)) without overflow. Returns -∞ for an empty slice or all -∞.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Standard normal CDF via the complementary error function (accurate in
/// both tails).
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile. The `statrs` inverse is good to about 1e-10;
/// one Halley step against the full-precision CDF polishes it.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    // work in the tail where the residual is representable
    let (r, d) = if x < 0.0 {
        (norm_cdf(x) - p, norm_pdf(x))
    } else {
        ((1.0 - p) - norm_cdf(-x), norm_pdf(x))
    };
    if d == 0.0 || !r.is_finite() {
        return x;
    }
    let u = r / d;
    x - u / (1.0 + 0.5 * x * u)
}

pub fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

pub fn binomial_ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let (k, nf) = (k as f64, n as f64);
    let head = if k == 0.0 { 0.0 } else { k * p.ln() };
    let tail = if k == nf { 0.0 } else { (nf - k) * (-p).ln_1p() };
    ln_choose(nf, k) + head + tail
}

pub fn binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    if p == 0.0 || p == 1.0 {
        let at = if p == 0.0 { 0 } else { n };
        return if k == at { 1.0 } else { 0.0 };
    }
    binomial_ln_pmf(k, n, p).exp()
}

/// Full binomial pmf vector for outcomes 0..=n.
pub fn binomial_pmf_all(n: u64, p: f64) -> Vec<f64> {
    (0..=n).map(|k| binomial_pmf(k, n, p)).collect()
}

pub fn poisson_ln_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let k = k as f64;
    k * lambda.ln() - lambda - ln_gamma(k + 1.0)
}

/// P(X ≤ k) for X ~ Poisson(λ).
pub fn poisson_cdf(k: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    gamma_ur(k as f64 + 1.0, lambda)
}

/// Smallest k with P(X ≤ k) ≥ p for X ~ Poisson(λ).
pub fn poisson_quantile(p: f64, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let guess = (lambda + norm_quantile(p.clamp(1e-300, 1.0 - 1e-16)) * lambda.sqrt()).max(0.0);
    let mut k = guess.floor() as u64;
    while k > 0 && poisson_cdf(k - 1, lambda) >= p {
        k -= 1;
    }
    while poisson_cdf(k, lambda) < p {
        k += 1;
    }
    k
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
