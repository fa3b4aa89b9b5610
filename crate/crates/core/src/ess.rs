//! Effective sample size of a mixture prior.
//!
//! Three methods are offered:
//!
//! * **ELIR** (default): the prior expectation of the ratio between the prior
//!   information `-(ln p)''` and the Fisher information of one observation.
//! * **Moment**: the sample size of the canonical conjugate prior with the
//!   same mean and variance.
//! * **Morita**: the number of observations after which a strongly inflated
//!   version of the prior carries, on average over the prior predictive, the
//!   same information at the prior mode as the prior itself.
//!
//! Conventions worth knowing: for gamma priors with a Poisson likelihood the
//! sample size is a pseudo-exposure (the rate parameter for a single gamma),
//! for the exponential likelihood it is a number of events (the shape).

use serde::{Deserialize, Serialize};

use crate::conjugate::{posterior_update, predictive, ObservedData};
use crate::error::{Error, Result};
use crate::mixture::{Family, GammaLikelihood, Kernel, Mixture};
use crate::numerics::quad::QuadOptions;
use crate::numerics::special::{log_sum_exp, poisson_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EssMethod {
    #[default]
    Elir,
    Moment,
    Morita,
}

impl std::str::FromStr for EssMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "elir" => Ok(EssMethod::Elir),
            "moment" => Ok(EssMethod::Moment),
            "morita" => Ok(EssMethod::Morita),
            other => Err(Error::invalid(format!("unknown ESS method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssOptions {
    /// Report a divergent ELIR integral as +∞ instead of an error.
    pub divergent_as_infinity: bool,
    /// Variance inflation factor of the Morita reference prior.
    pub morita_inflation: f64,
    /// Largest sample size the Morita search will consider.
    pub morita_max: f64,
}

impl Default for EssOptions {
    fn default() -> Self {
        EssOptions {
            divergent_as_infinity: false,
            morita_inflation: 100.0,
            morita_max: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub method: EssMethod,
    pub value: f64,
    /// Estimated absolute quadrature error (ELIR only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_err: Option<f64>,
    /// Integrand evaluations spent (ELIR only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<usize>,
    /// Reference point of the Morita method (the prior mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_point: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn interior(family: Family, theta: f64) -> Result<()> {
    let (lo, hi) = family.support();
    if theta > lo && theta < hi && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfSupport {
            value: theta,
            support: format!("open interval ({lo}, {hi})"),
        })
    }
}

/// Prior information `-(d²/dθ²) ln p(θ)` of a mixture.
///
/// With component weights `ω_k = w_k p_k(θ)/p(θ)` and component log-density
/// derivatives `ℓ'_k, ℓ''_k` this is `(Σ ω ℓ')² - Σ ω (ℓ'² + ℓ'')`.
pub fn prior_information(mix: &Mixture, theta: f64) -> Result<f64> {
    interior(mix.family(), theta)?;
    let parts: Vec<(f64, f64, f64)> = mix
        .kernels()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, k)| {
            let (d1, d2) = k.ln_pdf_derivatives(theta);
            (w.ln() + k.ln_pdf(theta), d1, d2)
        })
        .collect();
    if parts.len() == 1 {
        return Ok(-parts[0].2);
    }
    let lw: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let norm = log_sum_exp(&lw);
    let (mut m1, mut m2) = (0.0, 0.0);
    for &(l, d1, d2) in &parts {
        let om = (l - norm).exp();
        if om == 0.0 {
            // far from this component its derivatives can overflow
            continue;
        }
        m1 += om * d1;
        m2 += om * (d1 * d1 + d2);
    }
    Ok(m1 * m1 - m2)
}

/// Fisher information of a single observation.
pub fn fisher_information(family: Family, theta: f64) -> Result<f64> {
    interior(family, theta)?;
    Ok(match family {
        Family::Normal { sigma } => 1.0 / (sigma * sigma),
        Family::Beta => 1.0 / (theta * (1.0 - theta)),
        Family::Gamma {
            likelihood: GammaLikelihood::Poisson,
        } => 1.0 / theta,
        Family::Gamma {
            likelihood: GammaLikelihood::Exponential,
        } => 1.0 / (theta * theta),
    })
}

/// Effective sample size with default options.
pub fn ess(mix: &Mixture, method: EssMethod) -> Result<f64> {
    ess_with(mix, method, EssOptions::default()).map(|r| r.value)
}

pub fn ess_with(mix: &Mixture, method: EssMethod, opts: EssOptions) -> Result<EssReport> {
    match method {
        EssMethod::Elir => elir(mix, opts),
        EssMethod::Moment => moment(mix),
        EssMethod::Morita => morita(mix, opts),
    }
}

fn report(method: EssMethod, value: f64) -> EssReport {
    EssReport {
        method,
        value,
        abs_err: None,
        evaluations: None,
        reference_point: None,
        note: None,
    }
}

fn unit_note(family: Family) -> Option<String> {
    match family {
        Family::Gamma {
            likelihood: GammaLikelihood::Poisson,
        } => Some("poisson likelihood: sample size is expressed as exposure".into()),
        Family::Gamma {
            likelihood: GammaLikelihood::Exponential,
        } => Some("exponential likelihood: sample size is a number of events".into()),
        _ => None,
    }
}

fn moment(mix: &Mixture) -> Result<EssReport> {
    let (m, v) = (mix.mean(), mix.variance());
    if v <= 0.0 {
        return Err(Error::Degenerate("prior has zero variance".into()));
    }
    let value = match mix.family() {
        Family::Beta => m * (1.0 - m) / v - 1.0,
        Family::Normal { sigma } => sigma * sigma / v,
        Family::Gamma {
            likelihood: GammaLikelihood::Poisson,
        } => m / v,
        Family::Gamma {
            likelihood: GammaLikelihood::Exponential,
        } => m * m / v,
    };
    Ok(EssReport {
        note: unit_note(mix.family()),
        ..report(EssMethod::Moment, value)
    })
}

/// Components whose shape makes the ELIR integral diverge at a support edge.
fn elir_divergence(mix: &Mixture) -> Option<String> {
    for c in mix.components().iter().filter(|c| c.w > 0.0) {
        match mix.family() {
            Family::Beta if c.a < 1.0 || c.b < 1.0 => {
                return Some(format!("beta component ({}, {}) has a shape below 1", c.a, c.b))
            }
            Family::Gamma {
                likelihood: GammaLikelihood::Poisson,
            } if c.a < 1.0 => return Some(format!("gamma component shape {} is below 1", c.a)),
            _ => {}
        }
    }
    None
}

fn elir(mix: &Mixture, opts: EssOptions) -> Result<EssReport> {
    let family = mix.family();
    if let Some(why) = elir_divergence(mix) {
        if opts.divergent_as_infinity {
            return Ok(EssReport {
                note: Some(format!("ELIR integral diverges: {why}")),
                ..report(EssMethod::Elir, f64::INFINITY)
            });
        }
        return Err(Error::Divergent(format!("ELIR integral diverges: {why}")));
    }
    // The ratio i/i_F behaves like θ^-1 at 0 (and (1-θ)^-1 at 1 for beta);
    // passing these exponents lets the quadrature remove the singularity.
    let edges = match family {
        Family::Beta => (-1.0, -1.0),
        Family::Gamma {
            likelihood: GammaLikelihood::Poisson,
        } => (-1.0, 0.0),
        _ => (0.0, 0.0),
    };
    let ratio = |t: f64| {
        let (lo, hi) = family.support();
        if t <= lo || t >= hi {
            return 0.0;
        }
        match (prior_information(mix, t), fisher_information(family, t)) {
            (Ok(i), Ok(f)) => i / f,
            _ => 0.0,
        }
    };
    let qopts = QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-10,
        max_subdivisions: 2000,
    };
    let (mut value, mut abs_err, mut evaluations, mut converged) = (0.0, 0.0, 0, true);
    for (w, k) in mix.kernels().filter(|(w, _)| *w > 0.0) {
        let r = k.integrate_weighted(ratio, edges, qopts);
        value += w * r.value;
        abs_err += w * r.abs_err;
        evaluations += r.evaluations;
        converged &= r.converged;
    }
    if !value.is_finite() {
        return Err(Error::numerical(format!("ELIR integral evaluated to {value}")));
    }
    let mut note = unit_note(family);
    if !converged {
        log::warn!("ELIR quadrature did not reach its tolerance (error estimate {abs_err:e})");
        note = Some(format!("quadrature tolerance not reached, error estimate {abs_err:e}"));
    }
    Ok(EssReport {
        abs_err: Some(abs_err),
        evaluations: Some(evaluations),
        note,
        ..report(EssMethod::Elir, value)
    })
}

/// The Morita reference prior: same component means, variances multiplied by
/// `s`.
fn inflate(mix: &Mixture, s: f64) -> Result<Mixture> {
    let comps: Vec<(f64, f64, f64)> = mix
        .components()
        .iter()
        .map(|c| match mix.family() {
            Family::Normal { .. } => (c.w, c.a, c.b * s.sqrt()),
            // dividing both parameters keeps the mean and scales the
            // variance by about s
            Family::Beta | Family::Gamma { .. } => (c.w, c.a / s, c.b / s),
        })
        .collect();
    Mixture::new(mix.family(), &comps)
}

/// Expected information at `theta` of the inflated prior updated with `m`
/// observations drawn from the prior predictive of `mix`.
fn morita_expected_info(mix: &Mixture, vague: &Mixture, m: f64, theta: f64) -> Result<f64> {
    let family = mix.family();
    match family {
        Family::Beta => {
            let n = m.round() as u64;
            let pred = predictive(mix, n as f64)?;
            let mut acc = 0.0;
            for y in 0..=n {
                let p = pred.pmf(y);
                if p < 1e-300 {
                    continue;
                }
                let post = posterior_update(vague, &ObservedData::Binomial { r: y, n })?;
                acc += p * prior_information(&post, theta)?;
            }
            Ok(acc)
        }
        Family::Gamma {
            likelihood: GammaLikelihood::Poisson,
        } => {
            let pred = predictive(mix, m)?;
            let hi = mix
                .components()
                .iter()
                .map(|c| {
                    let k = Kernel::Gamma { shape: c.a, rate: c.b };
                    poisson_quantile(1.0 - 1e-12, k.quantile(1.0 - 1e-12) * m)
                })
                .max()
                .unwrap_or(0);
            let mut acc = 0.0;
            for y in 0..=hi {
                let p = pred.pmf(y);
                if p < 1e-300 {
                    continue;
                }
                let post = posterior_update(vague, &ObservedData::Poisson { count: y, exposure: m })?;
                acc += p * prior_information(&post, theta)?;
            }
            Ok(acc)
        }
        Family::Gamma {
            likelihood: GammaLikelihood::Exponential,
        } => {
            // For θ ~ Gamma(a, b) and a total T of n exponential draws,
            // T/(b+T) ~ Beta(n, a).
            let n = m.round().max(1.0) as u64;
            let mut acc = 0.0;
            for c in mix.components().iter().filter(|c| c.w > 0.0) {
                let k = Kernel::Beta { a: n as f64, b: c.a };
                let b = c.b;
                let f = |u: f64| {
                    if u <= 0.0 || u >= 1.0 {
                        return 0.0;
                    }
                    let total = b * u / (1.0 - u);
                    posterior_update(vague, &ObservedData::Exponential { n, total })
                        .and_then(|p| prior_information(&p, theta))
                        .unwrap_or(0.0)
                };
                acc += c.w
                    * k.integrate_weighted(f, (0.0, 0.0), QuadOptions::default().with_rel_tol(1e-8))
                        .value;
            }
            Ok(acc)
        }
        Family::Normal { .. } => {
            let pred = predictive(mix, m)?;
            let mut acc = 0.0;
            for c in &pred.components {
                let k = Kernel::Normal { mean: c.a, sd: c.b };
                let f = |y: f64| {
                    posterior_update(vague, &ObservedData::Normal { mean: y, n: m })
                        .and_then(|p| prior_information(&p, theta))
                        .unwrap_or(0.0)
                };
                acc += c.w
                    * k.integrate_weighted(f, (0.0, 0.0), QuadOptions::default().with_rel_tol(1e-8))
                        .value;
            }
            Ok(acc)
        }
    }
}

fn morita(mix: &Mixture, opts: EssOptions) -> Result<EssReport> {
    let family = mix.family();
    let theta = mix.mode();
    interior(family, theta).map_err(|_| {
        Error::Degenerate(format!(
            "prior mode {theta} lies on the support boundary; Morita ESS is undefined"
        ))
    })?;
    let target = prior_information(mix, theta)?;
    let vague = inflate(mix, opts.morita_inflation)?;
    let discrete = !matches!(
        family,
        Family::Normal { .. }
            | Family::Gamma {
                likelihood: GammaLikelihood::Poisson
            }
    );
    let gap = |m: f64| -> Result<f64> { Ok(morita_expected_info(mix, &vague, m, theta)? - target) };

    // Information grows with m, so bracket the sign change by doubling.
    let start = if discrete { 1.0 } else { 1.0 / 64.0 };
    let mut lo = 0.0;
    let mut g_lo = prior_information(&vague, theta)? - target;
    if g_lo >= 0.0 {
        return Ok(EssReport {
            reference_point: Some(theta),
            note: Some("the inflated prior already carries the prior's information".into()),
            ..report(EssMethod::Morita, 0.0)
        });
    }
    let mut hi = start;
    let mut g_hi = gap(hi)?;
    while g_hi < 0.0 {
        if hi >= opts.morita_max {
            return Err(Error::numerical(format!(
                "Morita ESS exceeds the search limit {}",
                opts.morita_max
            )));
        }
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        g_hi = gap(hi)?;
    }
    if discrete {
        // integer bisection, then linear interpolation between neighbours
        while hi - lo > 1.0 {
            let mid = ((lo + hi) / 2.0).floor();
            let g = gap(mid)?;
            if g < 0.0 {
                lo = mid;
                g_lo = g;
            } else {
                hi = mid;
                g_hi = g;
            }
        }
    } else {
        for _ in 0..60 {
            if hi - lo <= 1e-6 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let g = gap(mid)?;
            if g < 0.0 {
                lo = mid;
                g_lo = g;
            } else {
                hi = mid;
                g_hi = g;
            }
        }
    }
    let value = lo + (hi - lo) * (-g_lo) / (g_hi - g_lo);
    Ok(EssReport {
        reference_point: Some(theta),
        note: unit_note(family),
        ..report(EssMethod::Morita, value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_beta_information() {
        let m = Mixture::beta(&[(1.0, 2.0, 3.0)]).unwrap();
        assert!((prior_information(&m, 0.5).unwrap() - 12.0).abs() < 1e-12);
        assert!(prior_information(&m, 0.0).is_err());
    }

    #[test]
    fn fisher_table() {
        assert_eq!(fisher_information(Family::Normal { sigma: 2.0 }, 0.3).unwrap(), 0.25);
        assert_eq!(fisher_information(Family::Beta, 0.5).unwrap(), 4.0);
        let e = Family::Gamma {
            likelihood: GammaLikelihood::Exponential,
        };
        assert_eq!(fisher_information(e, 2.0).unwrap(), 0.25);
    }

    #[test]
    fn canonical_beta() {
        let m = Mixture::beta(&[(1.0, 11.0, 32.0)]).unwrap();
        assert!((ess(&m, EssMethod::Moment).unwrap() - 43.0).abs() < 1e-10);
        assert!((ess(&m, EssMethod::Elir).unwrap() - 43.0).abs() < 1e-6);
    }

    #[test]
    fn canonical_normal() {
        let m = Mixture::normal(2.0, &[(1.0, 0.3, 0.5)]).unwrap();
        assert!((ess(&m, EssMethod::Moment).unwrap() - 16.0).abs() < 1e-9);
        assert!((ess(&m, EssMethod::Elir).unwrap() - 16.0).abs() < 1e-6);
        let mo = ess(&m, EssMethod::Morita).unwrap();
        assert!((mo - 16.0).abs() < 0.5, "{mo}");
    }

    #[test]
    fn divergent_elir_is_flagged() {
        let m = Mixture::beta(&[(1.0, 0.5, 1.0)]).unwrap();
        assert!(matches!(ess(&m, EssMethod::Elir), Err(Error::Divergent(_))));
        let r = ess_with(
            &m,
            EssMethod::Elir,
            EssOptions {
                divergent_as_infinity: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.value.is_infinite());
    }

    #[test]
    fn morita_on_canonical_beta_is_close_to_a_plus_b() {
        let m = Mixture::beta(&[(1.0, 11.0, 32.0)]).unwrap();
        let v = ess(&m, EssMethod::Morita).unwrap();
        assert!((v - 43.0).abs() < 1.0, "{v}");
    }

    #[test]
    fn gamma_conventions() {
        let p = Mixture::gamma(GammaLikelihood::Poisson, &[(1.0, 6.0, 3.0)]).unwrap();
        assert!((ess(&p, EssMethod::Moment).unwrap() - 3.0).abs() < 1e-12);
        assert!((ess(&p, EssMethod::Elir).unwrap() - 3.0).abs() < 1e-6);
        let e = Mixture::gamma(GammaLikelihood::Exponential, &[(1.0, 6.0, 3.0)]).unwrap();
        assert!((ess(&e, EssMethod::Moment).unwrap() - 6.0).abs() < 1e-12);
        // prior information (a-1)/θ² against Fisher information θ⁻²
        assert!((ess(&e, EssMethod::Elir).unwrap() - 5.0).abs() < 1e-6);
    }
}
