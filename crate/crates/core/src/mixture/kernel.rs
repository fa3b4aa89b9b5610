//! Single conjugate densities (normal, beta, gamma) that make up a mixture.

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, Normal as NormalDist};

use crate::numerics::quad::{integrate, QuadOptions, QuadResult};
use crate::numerics::roots::{brent, RootOptions};
use crate::numerics::special::{beta_reg, gamma_lr, gamma_ur, ln_beta, ln_gamma, norm_cdf, norm_ln_pdf, norm_quantile};

/// One component density. Normal uses (mean, sd), beta uses (a, b) and
/// gamma uses (shape, rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Normal { mean: f64, sd: f64 },
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl Kernel {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Kernel::Normal { mean, sd } => norm_ln_pdf(x, mean, sd),
            Kernel::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                let lx = if a == 1.0 { 0.0 } else { (a - 1.0) * x.ln() };
                let l1x = if b == 1.0 { 0.0 } else { (b - 1.0) * (-x).ln_1p() };
                lx + l1x - ln_beta(a, b)
            }
            Kernel::Gamma { shape, rate } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lx = if shape == 1.0 { 0.0 } else { (shape - 1.0) * x.ln() };
                shape * rate.ln() - ln_gamma(shape) + lx - rate * x
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Kernel::Normal { mean, sd } => norm_cdf((x - mean) / sd),
            Kernel::Beta { a, b } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(a, b, x)
                }
            }
            Kernel::Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    gamma_lr(shape, rate * x)
                }
            }
        }
    }

    /// Survival function 1 - F(x), evaluated without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            Kernel::Normal { mean, sd } => norm_cdf((mean - x) / sd),
            Kernel::Beta { a, b } => {
                if x <= 0.0 {
                    1.0
                } else if x >= 1.0 {
                    0.0
                } else {
                    beta_reg(b, a, 1.0 - x)
                }
            }
            Kernel::Gamma { shape, rate } => {
                if x <= 0.0 {
                    1.0
                } else if x.is_infinite() {
                    0.0
                } else {
                    gamma_ur(shape, rate * x)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Kernel::Normal { mean, .. } => mean,
            Kernel::Beta { a, b } => a / (a + b),
            Kernel::Gamma { shape, rate } => shape / rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Kernel::Normal { sd, .. } => sd * sd,
            Kernel::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
            Kernel::Gamma { shape, rate } => shape / (rate * rate),
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Location of the density maximum (boundary value when the density is
    /// monotone on its support).
    pub fn mode(&self) -> f64 {
        match *self {
            Kernel::Normal { mean, .. } => mean,
            Kernel::Beta { a, b } => {
                if a > 1.0 && b > 1.0 {
                    (a - 1.0) / (a + b - 2.0)
                } else if a <= 1.0 && b > 1.0 {
                    0.0
                } else if a > 1.0 && b <= 1.0 {
                    1.0
                } else {
                    // bimodal or uniform; the mean is a neutral choice
                    a / (a + b)
                }
            }
            Kernel::Gamma { shape, rate } => ((shape - 1.0) / rate).max(0.0),
        }
    }

    /// First and second derivative of the log density at `x`.
    pub fn ln_pdf_derivatives(&self, x: f64) -> (f64, f64) {
        match *self {
            Kernel::Normal { mean, sd } => {
                let v = sd * sd;
                (-(x - mean) / v, -1.0 / v)
            }
            Kernel::Beta { a, b } => {
                let (u, v) = (1.0 - x, x);
                (
                    over(a - 1.0, v) - over(b - 1.0, u),
                    -over(a - 1.0, v * v) - over(b - 1.0, u * u),
                )
            }
            Kernel::Gamma { shape, rate } => (over(shape - 1.0, x) - rate, -over(shape - 1.0, x * x)),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if let Kernel::Normal { mean, sd } = *self {
            return mean + sd * norm_quantile(p);
        }
        let (lo_sup, _) = self.support();
        if p <= 0.0 {
            return lo_sup;
        }
        if p >= 1.0 {
            return match self {
                Kernel::Beta { .. } => 1.0,
                _ => f64::INFINITY,
            };
        }
        let hi = match *self {
            Kernel::Beta { .. } => 1.0,
            _ => {
                let (m, s) = (self.mean(), self.sd());
                let mut k = 10.0;
                let mut hi = m + k * s;
                while self.sf(hi) > (1.0 - p).min(p) * 0.5 && k < 1e8 {
                    k *= 2.0;
                    hi = m + k * s;
                }
                hi
            }
        };
        let opts = RootOptions {
            x_tol: 1e-15,
            f_tol: 0.0,
            max_iter: 400,
        };
        // Solve in whichever tail keeps the target representable. The lower
        // tail is searched on log scale so tiny quantiles keep full relative
        // precision.
        let root = if p < 0.5 {
            let mut t_lo = self.mean().ln() - 1.0;
            while self.cdf(t_lo.exp()) >= p && t_lo > -740.0 {
                t_lo -= 4.0;
            }
            if self.cdf(t_lo.exp()) >= p {
                return 0.0;
            }
            let t_opts = RootOptions { x_tol: 1e-15, ..opts };
            brent(|t| self.cdf(t.exp()) - p, t_lo, hi.ln(), t_opts).map(f64::exp)
        } else {
            let q = 1.0 - p;
            brent(|x| q - self.sf(x), 0.0, hi, opts)
        };
        root.unwrap_or_else(|_| self.mean())
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Kernel::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Kernel::Beta { .. } => (0.0, 1.0),
            Kernel::Gamma { .. } => (0.0, f64::INFINITY),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Kernel::Normal { mean, sd } => NormalDist::new(mean, sd).expect("valid normal").sample(rng),
            Kernel::Beta { a, b } => BetaDist::new(a, b).expect("valid beta").sample(rng),
            Kernel::Gamma { shape, rate } => GammaDist::new(shape, 1.0 / rate).expect("valid gamma").sample(rng),
        }
    }

    /// ∫ p(θ) f(θ) dθ over the support.
    ///
    /// `edge_exponents` states how `f` behaves at the lower/upper support
    /// boundary (f ~ θ^e₀ near 0, f ~ (1-θ)^e₁ near 1). Boundary pieces whose
    /// combined integrand is singular are integrated after the power
    /// substitution θ = u^{1/α}, which removes the singularity exactly.
    /// With α ≤ 0 the piece is integrated directly; the integral then only
    /// exists when the leading coefficient of `f` vanishes, which the caller
    /// has to guarantee.
    pub fn integrate_weighted<F: Fn(f64) -> f64>(
        &self,
        f: F,
        edge_exponents: (f64, f64),
        opts: QuadOptions,
    ) -> QuadResult {
        let (m, s) = (self.mean(), self.sd());
        let mut acc = QuadResult {
            value: 0.0,
            abs_err: 0.0,
            evaluations: 0,
            converged: true,
        };
        let mut add = |r: QuadResult| {
            acc.value += r.value;
            acc.abs_err += r.abs_err;
            acc.evaluations += r.evaluations;
            acc.converged &= r.converged;
        };
        match *self {
            Kernel::Normal { .. } => {
                let ks = [-9.0, -6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 9.0];
                let g = |x: f64| self.pdf(x) * f(x);
                for w in ks.windows(2) {
                    add(integrate(g, m + w[0] * s, m + w[1] * s, opts));
                }
            }
            Kernel::Beta { a, b } => {
                let mut pts = vec![0.0];
                for k in [-6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0] {
                    let x = m + k * s;
                    if x > 0.0 && x < 1.0 {
                        pts.push(x);
                    }
                }
                pts.push(1.0);
                let lnb = ln_beta(a, b);
                let alpha_lo = a + edge_exponents.0;
                let alpha_hi = b + edge_exponents.1;
                let n = pts.len();
                for (i, w) in pts.windows(2).enumerate() {
                    let (lo, hi) = (w[0], w[1]);
                    if i == 0 && alpha_lo > 0.0 && alpha_lo < 1.0 {
                        // θ = u^{1/α}: θ^{a-1} dθ = u^{(a-α)/α} du / α, f absorbs θ^{e₀}
                        let top = hi.powf(alpha_lo);
                        let g = |u: f64| {
                            if u <= 0.0 {
                                return 0.0;
                            }
                            let th = u.powf(1.0 / alpha_lo).max(EDGE_FLOOR);
                            let rest = if b == 1.0 { 0.0 } else { (b - 1.0) * (-th).ln_1p() };
                            // θ^{-e₀} f(θ) is bounded near 0
                            let fx = f(th) * th.powf(-edge_exponents.0);
                            (rest - lnb).exp() * fx / alpha_lo
                        };
                        add(integrate(g, 0.0, top, opts));
                    } else if i == n - 2 && alpha_hi > 0.0 && alpha_hi < 1.0 {
                        let top = (1.0 - lo).powf(alpha_hi);
                        let g = |v: f64| {
                            if v <= 0.0 {
                                return 0.0;
                            }
                            // snap to a distance that `1 - θ` reproduces exactly, so
                            // `f` sees the same edge distance as the weight below
                            let th = 1.0 - v.powf(1.0 / alpha_hi).max(f64::EPSILON);
                            let om = 1.0 - th;
                            let rest = if a == 1.0 { 0.0 } else { (a - 1.0) * th.ln() };
                            let fx = f(th) * om.powf(-edge_exponents.1);
                            (rest - lnb).exp() * fx / alpha_hi
                        };
                        add(integrate(g, 0.0, top, opts));
                    } else {
                        add(integrate(|x| self.pdf(x) * f(x), lo, hi, opts));
                    }
                }
            }
            Kernel::Gamma { shape, rate } => {
                let mut pts = vec![0.0];
                for k in [-6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 12.0] {
                    let x = m + k * s;
                    if x > 0.0 {
                        pts.push(x);
                    }
                }
                let mut top = m + 12.0 * s;
                while self.sf(top) > 1e-17 {
                    top = m + 2.0 * (top - m);
                }
                pts.push(top);
                let alpha_lo = shape + edge_exponents.0;
                let lnc = shape * rate.ln() - ln_gamma(shape);
                for (i, w) in pts.windows(2).enumerate() {
                    let (lo, hi) = (w[0], w[1]);
                    if i == 0 && alpha_lo > 0.0 && alpha_lo < 1.0 {
                        let top = hi.powf(alpha_lo);
                        let g = |u: f64| {
                            if u <= 0.0 {
                                return 0.0;
                            }
                            let th = u.powf(1.0 / alpha_lo).max(EDGE_FLOOR);
                            let fx = f(th) * th.powf(-edge_exponents.0);
                            (lnc - rate * th).exp() * fx / alpha_lo
                        };
                        add(integrate(g, 0.0, top, opts));
                    } else {
                        add(integrate(|x| self.pdf(x) * f(x), lo, hi, opts));
                    }
                }
            }
        }
        acc
    }
}

/// Smallest distance to a support edge at which a substituted integrand is
/// evaluated. For α near 0 the substitution maps much of the `u` range
/// below this; the transformed integrand is continuous there, so its value
/// at the floor stands in for the limit.
const EDGE_FLOOR: f64 = 1e-150;

/// `c / d`, taking an exactly vanishing coefficient as 0 even when `d`
/// underflows.
fn over(c: f64, d: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c / d
    }
}
