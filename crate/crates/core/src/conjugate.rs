//! Conjugate updating of mixture priors and their prior-predictive laws.
//!
//! Every component is updated by its textbook conjugate rule. The weights are
//! reweighted by each component's marginal likelihood of the data, computed
//! in log space so that large trials do not underflow.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Component, Family, GammaLikelihood, Mixture};
use crate::numerics::special::{ln_beta, ln_choose, ln_gamma, log_sum_exp, norm_cdf, norm_ln_pdf};

/// Summary data from one trial arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservedData {
    /// `r` responders out of `n` subjects.
    Binomial { r: u64, n: u64 },
    /// Sample mean of `n` observations with the family's known σ. `n` may be
    /// fractional when it was derived from a standard error.
    Normal { mean: f64, n: f64 },
    /// Estimate with a standard error taken as exactly known.
    NormalSe { mean: f64, se: f64 },
    /// Total event count over the given exposure.
    Poisson { count: u64, exposure: f64 },
    /// `n` exponential observations summing to `total`.
    Exponential { n: u64, total: f64 },
}

impl ObservedData {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ObservedData::Binomial { r, n } => r <= n,
            ObservedData::Normal { mean, n } => mean.is_finite() && n.is_finite() && n > 0.0,
            ObservedData::NormalSe { mean, se } => mean.is_finite() && se.is_finite() && se > 0.0,
            ObservedData::Poisson { exposure, .. } => exposure.is_finite() && exposure > 0.0,
            ObservedData::Exponential { n, total } => n >= 1 && total.is_finite() && total > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid observed data {self:?}")))
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ObservedData::Binomial { .. } => "binomial",
            ObservedData::Normal { .. } | ObservedData::NormalSe { .. } => "normal",
            ObservedData::Poisson { .. } => "poisson",
            ObservedData::Exponential { .. } => "exponential",
        }
    }
}

fn mismatch(family: Family, data: &ObservedData) -> Error {
    Error::FamilyMismatch(format!(
        "{} data cannot update a {} prior{}",
        data.kind(),
        family.name(),
        match family.likelihood() {
            Some(GammaLikelihood::Poisson) => " (poisson likelihood)",
            Some(GammaLikelihood::Exponential) => " (exponential likelihood)",
            None => "",
        }
    ))
}

/// Standard parameters `(a, b)` from a mean and a number of observations.
///
/// beta: `(m·n, (1-m)·n)`; gamma/poisson: `(m·n, n)`; gamma/exponential:
/// `(n, n/m)`; normal: `(m, σ/√n)`.
pub fn from_mean_n(family: Family, mean: f64, n: f64) -> Result<(f64, f64)> {
    let v = crate::mixture::vague_component(family, mean, n)?;
    let c = v.components()[0];
    Ok((c.a, c.b))
}

/// Standard parameters `(a, b)` from a mean and a standard deviation.
pub fn from_mean_sd(family: Family, mean: f64, sd: f64) -> Result<(f64, f64)> {
    if !(sd.is_finite() && sd > 0.0) {
        return Err(Error::invalid(format!("standard deviation must be > 0, got {sd}")));
    }
    match family {
        Family::Normal { .. } => {
            if !mean.is_finite() {
                return Err(Error::invalid("normal mean must be finite"));
            }
            Ok((mean, sd))
        }
        Family::Beta => {
            let v = sd * sd;
            if !(mean > 0.0 && mean < 1.0) || v >= mean * (1.0 - mean) {
                return Err(Error::invalid(format!(
                    "no beta distribution has mean {mean} and sd {sd}"
                )));
            }
            let n = mean * (1.0 - mean) / v - 1.0;
            Ok((mean * n, (1.0 - mean) * n))
        }
        Family::Gamma { .. } => {
            if !(mean > 0.0 && mean.is_finite()) {
                return Err(Error::invalid(format!("gamma mean must be > 0, got {mean}")));
            }
            let rate = mean / (sd * sd);
            Ok((mean * rate, rate))
        }
    }
}

/// Updated parameters and log marginal likelihood of one component.
fn update_component(family: Family, c: &Component, data: &ObservedData) -> Result<(f64, f64, f64)> {
    match (family, *data) {
        (Family::Beta, ObservedData::Binomial { r, n }) => {
            let (rf, nf) = (r as f64, n as f64);
            let a = c.a + rf;
            let b = c.b + nf - rf;
            let lm = ln_choose(nf, rf) + ln_beta(a, b) - ln_beta(c.a, c.b);
            Ok((a, b, lm))
        }
        (Family::Normal { sigma }, ObservedData::Normal { .. } | ObservedData::NormalSe { .. }) => {
            let (ybar, n) = match *data {
                ObservedData::Normal { mean, n } => (mean, n),
                ObservedData::NormalSe { mean, se } => (mean, sigma * sigma / (se * se)),
                _ => unreachable!(),
            };
            let data_var = sigma * sigma / n;
            let prior_var = c.b * c.b;
            let prec = 1.0 / prior_var + 1.0 / data_var;
            let mean = (c.a / prior_var + ybar / data_var) / prec;
            let lm = norm_ln_pdf(ybar, c.a, (prior_var + data_var).sqrt());
            Ok((mean, prec.recip().sqrt(), lm))
        }
        (
            Family::Gamma {
                likelihood: GammaLikelihood::Poisson,
            },
            ObservedData::Poisson { count, exposure },
        ) => {
            let s = count as f64;
            let lm = nb_ln_pmf(s, c.a, c.b, exposure);
            Ok((c.a + s, c.b + exposure, lm))
        }
        (
            Family::Gamma {
                likelihood: GammaLikelihood::Exponential,
            },
            ObservedData::Exponential { n, total },
        ) => {
            let nf = n as f64;
            let lm = ln_gamma(c.a + nf) - ln_gamma(c.a) + c.a * c.b.ln() - (c.a + nf) * (c.b + total).ln();
            Ok((c.a + nf, c.b + total, lm))
        }
        _ => Err(mismatch(family, data)),
    }
}

/// Posterior mixture after observing `data`.
pub fn posterior_update(prior: &Mixture, data: &ObservedData) -> Result<Mixture> {
    data.validate()?;
    let family = prior.family();
    let mut parts = Vec::with_capacity(prior.len());
    let mut logw = Vec::with_capacity(prior.len());
    for c in prior.components() {
        let (a, b, lm) = update_component(family, c, data)?;
        parts.push((a, b));
        logw.push(if c.w > 0.0 { c.w.ln() + lm } else { f64::NEG_INFINITY });
    }
    let norm = log_sum_exp(&logw);
    if !norm.is_finite() {
        return Err(Error::numerical(
            "data have zero marginal likelihood under every component",
        ));
    }
    let comps: Vec<(f64, f64, f64)> = parts
        .iter()
        .zip(&logw)
        .map(|(&(a, b), lw)| ((lw - norm).exp(), a, b))
        .collect();
    Mixture::new(family, &comps)
}

/// Log marginal likelihood of `data` under the whole mixture.
pub fn ln_marginal(prior: &Mixture, data: &ObservedData) -> Result<f64> {
    data.validate()?;
    let family = prior.family();
    let mut logw = Vec::with_capacity(prior.len());
    for c in prior.components() {
        let (_, _, lm) = update_component(family, c, data)?;
        logw.push(if c.w > 0.0 { c.w.ln() + lm } else { f64::NEG_INFINITY });
    }
    Ok(log_sum_exp(&logw))
}

fn nb_ln_pmf(y: f64, a: f64, b: f64, exposure: f64) -> f64 {
    ln_gamma(a + y) - ln_gamma(a) - ln_gamma(y + 1.0)
        + a * (b / (b + exposure)).ln()
        + y * (exposure / (b + exposure)).ln()
}

fn beta_binomial_ln_pmf(y: f64, n: f64, a: f64, b: f64) -> f64 {
    ln_choose(n, y) + ln_beta(y + a, n - y + b) - ln_beta(a, b)
}

/// Which predictive law the components describe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictiveKind {
    /// Number of responders among `n` subjects.
    BetaBinomial { n: u64 },
    /// Event count over `exposure`.
    NegativeBinomial { exposure: f64 },
    /// Sample mean of `n` observations with known σ.
    Normal { n: f64, sigma: f64 },
}

/// Prior-predictive distribution of a future trial outcome.
///
/// Components keep the prior's `(w, a, b)`; for the normal kind `(a, b)` are
/// the predictive mean and standard deviation of the sample mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMixture {
    pub kind: PredictiveKind,
    pub components: Vec<Component>,
}

impl PredictiveMixture {
    /// Probability of count `y` (discrete kinds only; 0 for the normal kind).
    pub fn pmf(&self, y: u64) -> f64 {
        self.ln_pmf(y).exp()
    }

    pub fn ln_pmf(&self, y: u64) -> f64 {
        let yf = y as f64;
        let terms: Vec<f64> = match self.kind {
            PredictiveKind::BetaBinomial { n } => {
                if y > n {
                    return f64::NEG_INFINITY;
                }
                self.components
                    .iter()
                    .map(|c| c.w.ln() + beta_binomial_ln_pmf(yf, n as f64, c.a, c.b))
                    .collect()
            }
            PredictiveKind::NegativeBinomial { exposure } => self
                .components
                .iter()
                .map(|c| c.w.ln() + nb_ln_pmf(yf, c.a, c.b, exposure))
                .collect(),
            PredictiveKind::Normal { .. } => return f64::NEG_INFINITY,
        };
        log_sum_exp(&terms)
    }

    /// Density of the predictive sample mean (normal kind only).
    pub fn density(&self, x: f64) -> f64 {
        match self.kind {
            PredictiveKind::Normal { .. } => self
                .components
                .iter()
                .map(|c| c.w * norm_ln_pdf(x, c.a, c.b).exp())
                .sum(),
            _ => 0.0,
        }
    }

    /// P(Y ≤ y).
    pub fn cdf(&self, y: f64) -> f64 {
        match self.kind {
            PredictiveKind::Normal { .. } => self.components.iter().map(|c| c.w * norm_cdf((y - c.a) / c.b)).sum(),
            _ => {
                if y < 0.0 {
                    return 0.0;
                }
                let top = y.floor() as u64;
                if let PredictiveKind::BetaBinomial { n } = self.kind {
                    if top >= n {
                        return 1.0;
                    }
                }
                (0..=top).map(|k| self.pmf(k)).sum::<f64>().min(1.0)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.components
            .iter()
            .map(|c| {
                c.w * match self.kind {
                    PredictiveKind::BetaBinomial { n } => n as f64 * c.a / (c.a + c.b),
                    PredictiveKind::NegativeBinomial { exposure } => exposure * c.a / c.b,
                    PredictiveKind::Normal { .. } => c.a,
                }
            })
            .sum()
    }

    /// Draw one outcome by simulating the parameter, then the data.
    pub fn draw<R: Rng + ?Sized>(&self, prior: &Mixture, rng: &mut R) -> f64 {
        let theta = prior.draw(rng);
        match self.kind {
            PredictiveKind::BetaBinomial { n } => Binomial::new(n, theta).expect("valid binomial").sample(rng) as f64,
            PredictiveKind::NegativeBinomial { exposure } => {
                let lam = theta * exposure;
                if lam <= 0.0 {
                    0.0
                } else {
                    Poisson::new(lam).expect("valid poisson").sample(rng)
                }
            }
            PredictiveKind::Normal { n, sigma } => {
                let sd = sigma / n.sqrt();
                theta + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
            }
        }
    }
}

/// Prior-predictive law of the outcome of a trial with `n` subjects
/// (binomial, normal) or exposure `n` (poisson).
pub fn predictive(prior: &Mixture, n: f64) -> Result<PredictiveMixture> {
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid(format!("predictive size must be > 0, got {n}")));
    }
    let (kind, components) = match prior.family() {
        Family::Beta => {
            if n.fract() != 0.0 {
                return Err(Error::invalid(format!(
                    "binomial trial size must be an integer, got {n}"
                )));
            }
            (
                PredictiveKind::BetaBinomial { n: n as u64 },
                prior.components().to_vec(),
            )
        }
        Family::Gamma {
            likelihood: GammaLikelihood::Poisson,
        } => (
            PredictiveKind::NegativeBinomial { exposure: n },
            prior.components().to_vec(),
        ),
        Family::Gamma {
            likelihood: GammaLikelihood::Exponential,
        } => {
            return Err(Error::Unsupported(
                "predictive distributions are not available for the exponential likelihood".into(),
            ))
        }
        Family::Normal { sigma } => {
            let v = sigma * sigma / n;
            let comps = prior
                .components()
                .iter()
                .map(|c| Component {
                    w: c.w,
                    a: c.a,
                    b: (c.b * c.b + v).sqrt(),
                })
                .collect();
            (PredictiveKind::Normal { n, sigma }, comps)
        }
    };
    Ok(PredictiveMixture { kind, components })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treatment_arm_update() {
        let prior = Mixture::beta(&[(1.0, 0.5, 1.0)]).unwrap();
        let post = posterior_update(&prior, &ObservedData::Binomial { r: 15, n: 24 }).unwrap();
        let c = post.components()[0];
        assert_eq!((c.w, c.a, c.b), (1.0, 15.5, 10.0));
    }

    #[test]
    fn mean_n_and_mean_sd_parameterizations() {
        assert_eq!(from_mean_n(Family::Beta, 0.5, 2.0).unwrap(), (1.0, 1.0));
        let pois = Family::Gamma {
            likelihood: GammaLikelihood::Poisson,
        };
        assert_eq!(from_mean_n(pois, 2.0, 5.0).unwrap(), (10.0, 5.0));
        let sd = (11.0f64 * 32.0 / (43.0 * 43.0 * 44.0)).sqrt();
        let (a, b) = from_mean_sd(Family::Beta, 11.0 / 43.0, sd).unwrap();
        assert!((a - 11.0).abs() < 1e-10 && (b - 32.0).abs() < 1e-10);
        assert!(from_mean_sd(Family::Beta, 0.5, 0.6).is_err());
    }

    #[test]
    fn normal_se_matches_equivalent_n() {
        let prior = Mixture::normal(2.0, &[(0.3, 0.0, 1.0), (0.7, 1.0, 0.5)]).unwrap();
        let a = posterior_update(&prior, &ObservedData::NormalSe { mean: 0.4, se: 0.5 }).unwrap();
        let b = posterior_update(&prior, &ObservedData::Normal { mean: 0.4, n: 16.0 }).unwrap();
        for (x, y) in a.components().iter().zip(b.components()) {
            assert!((x.w - y.w).abs() < 1e-14 && (x.a - y.a).abs() < 1e-14 && (x.b - y.b).abs() < 1e-14);
        }
    }

    #[test]
    fn mismatched_data_is_rejected() {
        let prior = Mixture::beta(&[(1.0, 1.0, 1.0)]).unwrap();
        assert!(matches!(
            posterior_update(
                &prior,
                &ObservedData::Poisson {
                    count: 1,
                    exposure: 1.0
                }
            ),
            Err(Error::FamilyMismatch(_))
        ));
        assert!(posterior_update(&prior, &ObservedData::Binomial { r: 3, n: 2 }).is_err());
    }

    #[test]
    fn uniform_prior_predictive_for_one_subject() {
        let prior = Mixture::beta(&[(1.0, 1.0, 1.0)]).unwrap();
        let p = predictive(&prior, 1.0).unwrap();
        assert!((p.pmf(1) - 0.5).abs() < 1e-14);
        assert!((p.pmf(0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn exponential_predictive_is_unsupported() {
        let prior = Mixture::gamma(GammaLikelihood::Exponential, &[(1.0, 2.0, 1.0)]).unwrap();
        assert!(matches!(predictive(&prior, 3.0), Err(Error::Unsupported(_))));
        let post = posterior_update(&prior, &ObservedData::Exponential { n: 3, total: 1.5 }).unwrap();
        assert_eq!(post.components()[0].a, 5.0);
        assert_eq!(post.components()[0].b, 2.5);
    }

    #[test]
    fn normal_predictive_approaches_prior_for_large_n() {
        let prior = Mixture::normal(1.0, &[(1.0, 0.0, 0.3)]).unwrap();
        let p = predictive(&prior, 1e12).unwrap();
        assert!((p.components[0].b - 0.3).abs() < 1e-9);
    }
}
