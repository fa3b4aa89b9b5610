//! Distribution of `g(θ₁) - g(θ₂)` for independent θ₁ ~ mix1, θ₂ ~ mix2.
//!
//! Normal mixtures on the identity scale have an exact normal-mixture
//! difference. Every other case integrates the convolution
//! `∫ p₂(θ) F₁(g⁻¹(δ + g(θ))) dθ` component by component over mix2.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Family, Link, Mixture};
use crate::error::{Error, Result};
use crate::numerics::quad::QuadOptions;
use crate::numerics::roots::{brent, RootOptions};
use crate::numerics::special::{norm_cdf, norm_pdf};

fn diff_quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-11,
        rel_tol: 1e-11,
        max_subdivisions: 400,
    }
}

fn check(mix1: &Mixture, mix2: &Mixture, link: Link) -> Result<()> {
    if !mix1.same_family(mix2) {
        return Err(Error::FamilyMismatch(format!(
            "difference of {:?} and {:?} mixtures",
            mix1.family(),
            mix2.family()
        )));
    }
    link.check_family(&mix1.family())
}

fn normal_identity(mix1: &Mixture, link: Link) -> bool {
    matches!(mix1.family(), Family::Normal { .. }) && link == Link::Identity
}

/// Pairwise normal differences (mean, sd, weight).
fn normal_pairs<'a>(mix1: &'a Mixture, mix2: &'a Mixture) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
    mix1.components().iter().flat_map(move |c1| {
        mix2.components()
            .iter()
            .map(move |c2| (c1.a - c2.a, (c1.b * c1.b + c2.b * c2.b).sqrt(), c1.w * c2.w))
    })
}

/// P(g(θ₁) - g(θ₂) ≤ δ).
pub fn diff_cdf(mix1: &Mixture, mix2: &Mixture, delta: f64, link: Link) -> Result<f64> {
    check(mix1, mix2, link)?;
    if normal_identity(mix1, link) {
        return Ok(normal_pairs(mix1, mix2)
            .map(|(m, s, w)| w * norm_cdf((delta - m) / s))
            .sum::<f64>()
            .clamp(0.0, 1.0));
    }
    let f1 = |t: f64| mix1.cdf(link.inverse(delta + link.apply(t)));
    let mut total = 0.0;
    for (w, k) in mix2.kernels() {
        if w == 0.0 {
            continue;
        }
        let r = k.integrate_weighted(f1, (0.0, 0.0), diff_quad_opts());
        total += w * r.value;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Density of g(θ₁) - g(θ₂) at `x`.
pub fn diff_density(mix1: &Mixture, mix2: &Mixture, x: f64, link: Link) -> Result<f64> {
    check(mix1, mix2, link)?;
    if normal_identity(mix1, link) {
        return Ok(normal_pairs(mix1, mix2)
            .map(|(m, s, w)| w * norm_pdf((x - m) / s) / s)
            .sum());
    }
    let f1 = |t: f64| {
        let u = x + link.apply(t);
        let th = link.inverse(u);
        let d = mix1.density(th);
        if d == 0.0 {
            0.0
        } else {
            d * link.inverse_derivative(u)
        }
    };
    let mut total = 0.0;
    for (w, k) in mix2.kernels() {
        if w == 0.0 {
            continue;
        }
        total += w * k.integrate_weighted(f1, (0.0, 0.0), diff_quad_opts()).value;
    }
    Ok(total.max(0.0))
}

/// Quantile of g(θ₁) - g(θ₂) by root search on [`diff_cdf`].
pub fn diff_quantile(mix1: &Mixture, mix2: &Mixture, p: f64, link: Link) -> Result<f64> {
    check(mix1, mix2, link)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("quantile probability {p} outside (0,1)")));
    }
    let eps = 1e-12;
    let g = |x: f64| link.apply(x);
    let mut lo = g(mix1.quantile(eps)?) - g(mix2.quantile(1.0 - eps)?);
    let mut hi = g(mix1.quantile(1.0 - eps)?) - g(mix2.quantile(eps)?);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::numerical("difference distribution has no finite bracket"));
    }
    let mut width = (hi - lo).max(1e-8);
    while diff_cdf(mix1, mix2, lo, link)? > p {
        lo -= width;
        width *= 2.0;
    }
    width = (hi - lo).max(1e-8);
    while diff_cdf(mix1, mix2, hi, link)? < p {
        hi += width;
        width *= 2.0;
    }
    let opts = RootOptions {
        x_tol: 1e-11,
        f_tol: 1e-12,
        max_iter: 200,
    };
    brent(|x| diff_cdf(mix1, mix2, x, link).unwrap_or(f64::NAN) - p, lo, hi, opts)
}

/// Paired draws of g(θ₁) - g(θ₂).
pub fn diff_sample(mix1: &Mixture, mix2: &Mixture, n: usize, seed: u64, link: Link) -> Result<Vec<f64>> {
    check(mix1, mix2, link)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let a = mix1.draw(&mut rng);
            let b = mix2.draw(&mut rng);
            link.apply(a) - link.apply(b)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_mixtures_give_one_half() {
        let m = Mixture::beta(&[(0.6, 3.0, 7.0), (0.4, 12.0, 5.0)]).unwrap();
        let p = diff_cdf(&m, &m, 0.0, Link::Identity).unwrap();
        assert!((p - 0.5).abs() < 1e-9, "{p}");
        let p = diff_cdf(&m, &m, 0.0, Link::Logit).unwrap();
        assert!((p - 0.5).abs() < 1e-9, "{p}");
    }

    #[test]
    fn normal_difference_exact() {
        let a = Mixture::normal(1.0, &[(1.0, 1.0, 1.0)]).unwrap();
        let b = Mixture::normal(1.0, &[(1.0, 0.0, 1.0)]).unwrap();
        let p = diff_cdf(&a, &b, 0.0, Link::Identity).unwrap();
        assert!((p - norm_cdf(-1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!((p - 0.2398).abs() < 1e-4);
    }

    #[test]
    fn incompatible_link_is_rejected() {
        let a = Mixture::normal(1.0, &[(1.0, 1.0, 1.0)]).unwrap();
        assert!(diff_cdf(&a, &a, 0.0, Link::Logit).is_err());
        let g = Mixture::gamma(crate::mixture::GammaLikelihood::Poisson, &[(1.0, 2.0, 1.0)]).unwrap();
        assert!(diff_cdf(&g, &g, 0.0, Link::Logit).is_err());
        assert!(diff_cdf(&g, &a, 0.0, Link::Identity).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let a = Mixture::beta(&[(1.0, 15.5, 10.0)]).unwrap();
        let b = Mixture::beta(&[(0.7, 12.2, 37.8), (0.3, 2.0, 3.0)]).unwrap();
        for &p in &[0.05, 0.5, 0.95] {
            let q = diff_quantile(&a, &b, p, Link::Identity).unwrap();
            let back = diff_cdf(&a, &b, q, Link::Identity).unwrap();
            assert!((back - p).abs() < 1e-9);
        }
    }

    #[test]
    fn log_link_gamma_ratio() {
        // θ₁/θ₂ for two exponential(1) variables: P(ratio ≤ 1) = 1/2, P(ratio ≤ e) = e/(1+e)
        let g = Mixture::gamma(crate::mixture::GammaLikelihood::Poisson, &[(1.0, 1.0, 1.0)]).unwrap();
        let p = diff_cdf(&g, &g, 1.0, Link::Log).unwrap();
        let e = std::f64::consts::E;
        assert!((p - e / (1.0 + e)).abs() < 1e-9, "{p}");
    }

    #[test]
    fn density_integrates_to_cdf_increment() {
        let a = Mixture::beta(&[(1.0, 4.0, 6.0)]).unwrap();
        let b = Mixture::beta(&[(1.0, 5.0, 5.0)]).unwrap();
        let r = crate::numerics::integrate(
            |x| diff_density(&a, &b, x, Link::Identity).unwrap(),
            -0.3,
            0.1,
            QuadOptions::default().with_abs_tol(1e-9),
        );
        let inc = diff_cdf(&a, &b, 0.1, Link::Identity).unwrap() - diff_cdf(&a, &b, -0.3, Link::Identity).unwrap();
        assert!((r.value - inc).abs() < 1e-7, "{} vs {inc}", r.value);
    }
}
