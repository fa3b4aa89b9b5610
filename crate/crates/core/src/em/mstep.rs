//! Weighted maximum-likelihood solves for single beta and gamma components.

use crate::error::{Error, Result};
use crate::numerics::roots::{brent, RootOptions};
use crate::numerics::special::{digamma, ln_beta, trigamma};

/// Maximise `(a-1)·l1 + (b-1)·l2 - ln B(a,b)` over `a, b > 0`, where `l1`
/// and `l2` are the weighted means of `ln y` and `ln(1-y)`.
///
/// The objective is strictly concave, so Newton steps with step halving
/// converge from any positive start; halving also keeps both parameters
/// positive. The solution satisfies
/// `ψ(a) - ψ(a+b) = l1` and `ψ(b) - ψ(a+b) = l2`.
pub fn beta_mstep(l1: f64, l2: f64, start: (f64, f64)) -> Result<(f64, f64)> {
    if !(l1 < 0.0 && l2 < 0.0 && (l1.exp() + l2.exp()) < 1.0) {
        return Err(Error::Degenerate(format!(
            "log-moments ({l1}, {l2}) admit no beta maximum"
        )));
    }
    let obj = |a: f64, b: f64| (a - 1.0) * l1 + (b - 1.0) * l2 - ln_beta(a, b);
    let (mut a, mut b) = start;
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        (a, b) = (1.0, 1.0);
    }
    let mut f = obj(a, b);
    for _ in 0..500 {
        let dab = digamma(a + b);
        let ga = l1 - digamma(a) + dab;
        let gb = l2 - digamma(b) + dab;
        let tab = trigamma(a + b);
        let haa = tab - trigamma(a);
        let hbb = tab - trigamma(b);
        let hab = tab;
        let det = haa * hbb - hab * hab;
        let (mut da, mut db) = if det > 0.0 {
            (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        if (ga.abs() < 1e-13 * (1.0 + 1.0 / a)) && (gb.abs() < 1e-13 * (1.0 + 1.0 / b)) {
            return Ok((a, b));
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..80 {
            let (na, nb) = (a + t * da, b + t * db);
            if na > 0.0 && nb > 0.0 {
                let nf = obj(na, nb);
                // near the optimum the gain falls below rounding noise in f
                if nf >= f - 1e-13 * (1.0 + f.abs()) {
                    moved = (na != a) || (nb != b);
                    a = na;
                    b = nb;
                    f = nf;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            return Ok((a, b));
        }
        da *= t;
        db *= t;
        if da.abs() <= 1e-15 * a && db.abs() <= 1e-15 * b {
            return Ok((a, b));
        }
    }
    Ok((a, b))
}

/// Gamma maximum likelihood from the weighted mean `m` and weighted mean
/// log `lm`. The shape solves `ln a - ψ(a) = ln m - lm`; the rate follows
/// from `a/b = m`.
pub fn gamma_mstep(m: f64, lm: f64) -> Result<(f64, f64)> {
    let s = m.ln() - lm;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Degenerate(format!(
            "gamma component has no spread (ln mean - mean ln = {s})"
        )));
    }
    let h = |t: f64| {
        let a = t.exp();
        a.ln() - digamma(a) - s
    };
    // Closed-form approximation gives a start; bracket around it on log scale.
    let a0 = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    let (mut lo, mut hi) = (a0.ln() - 1.0, a0.ln() + 1.0);
    while h(lo) < 0.0 && lo > -700.0 {
        lo -= 2.0;
    }
    while h(hi) > 0.0 && hi < 700.0 {
        hi += 2.0;
    }
    let opts = RootOptions {
        x_tol: 1e-15,
        f_tol: 0.0,
        max_iter: 300,
    };
    let a = brent(h, lo, hi, opts)?.exp();
    Ok((a, a / m))
}
