//! Trial designs: decision boundaries, operating characteristics (OC) and
//! probability of success (PoS).
//!
//! A design pairs a [`DecisionFunction`] with one or two arms, each given by
//! a prior and a sample size (subjects for binomial and normal endpoints,
//! exposure for poisson endpoints). The OC at a fixed true parameter is the
//! frequency of success over the sampling distribution of the outcomes; the
//! PoS averages that frequency over a distribution of the true parameter,
//! which amounts to using prior-predictive outcome laws.
//!
//! Binomial outcomes are summed exactly. Poisson outcomes of the second arm
//! and normal outcomes are restricted to a region carrying `1 - eps` of the
//! relevant mass.

mod decision;
mod region;

pub use decision::{evaluate_decision, Arity, Criterion, DecisionFunction};
pub use region::Region;

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::conjugate::{posterior_update, predictive, ObservedData, PredictiveKind, PredictiveMixture};
use crate::error::{Error, Result};
use crate::mixture::{Family, GammaLikelihood, Mixture};
use crate::numerics::quad::{integrate, QuadOptions};
use crate::numerics::special::{binomial_pmf_all, norm_pdf, norm_quantile, poisson_ln_pmf, poisson_quantile};
use region::{continuous_region, count_region, normal_prob, CountLaw};

/// Default mass left outside truncated outcome ranges.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Binomial arms up to this size are scanned outcome by outcome when the
/// boundary is built; larger arms use bisection.
pub const EXHAUSTIVE_MAX: u64 = 200;

/// Kind of endpoint implied by the prior family.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Endpoint {
    Binomial,
    Normal { sigma: f64 },
    Poisson,
}

fn endpoint(family: Family) -> Result<Endpoint> {
    match family {
        Family::Beta => Ok(Endpoint::Binomial),
        Family::Normal { sigma } => Ok(Endpoint::Normal { sigma }),
        Family::Gamma {
            likelihood: GammaLikelihood::Poisson,
        } => Ok(Endpoint::Poisson),
        Family::Gamma {
            likelihood: GammaLikelihood::Exponential,
        } => Err(Error::Unsupported(
            "designs with exponential endpoints are not supported".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub prior: Mixture,
    /// Subjects (binomial, normal) or exposure (poisson).
    pub n: f64,
}

impl Arm {
    pub fn new(prior: Mixture, n: f64) -> Result<Self> {
        let ep = endpoint(prior.family())?;
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid(format!("sample size must be > 0, got {n}")));
        }
        if ep == Endpoint::Binomial && n.fract() != 0.0 {
            return Err(Error::invalid(format!(
                "binomial sample size must be an integer, got {n}"
            )));
        }
        Ok(Arm { prior, n })
    }

    fn endpoint(&self) -> Endpoint {
        endpoint(self.prior.family()).expect("checked on construction")
    }

    fn data(&self, y: f64) -> ObservedData {
        match self.endpoint() {
            Endpoint::Binomial => ObservedData::Binomial {
                r: y as u64,
                n: self.n as u64,
            },
            Endpoint::Normal { .. } => ObservedData::Normal { mean: y, n: self.n },
            Endpoint::Poisson => ObservedData::Poisson {
                count: y as u64,
                exposure: self.n,
            },
        }
    }

    fn posterior(&self, y: f64) -> Result<Mixture> {
        posterior_update(&self.prior, &self.data(y))
    }

    /// Standard error of the sample mean (normal endpoints).
    fn se(&self) -> f64 {
        match self.endpoint() {
            Endpoint::Normal { sigma } => sigma / self.n.sqrt(),
            _ => f64::NAN,
        }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        let ok = match self.endpoint() {
            Endpoint::Binomial => (0.0..=1.0).contains(&theta),
            Endpoint::Normal { .. } => theta.is_finite(),
            Endpoint::Poisson => theta >= 0.0 && theta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "true parameter {theta} outside the parameter space"
            )))
        }
    }
}

/// Boundary of one outcome of the second arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub y2: f64,
    pub region: Region,
}

/// Tabulated decision boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arity", rename_all = "snake_case")]
pub enum Boundary {
    OneSample {
        region: Region,
    },
    TwoSample {
        /// Success region in the first-arm outcome for each listed
        /// second-arm outcome.
        rows: Vec<BoundaryRow>,
        /// Whether the critical first-arm outcome moves in one direction
        /// as the second-arm outcome increases.
        monotone: bool,
        /// True when the rows cover every possible second-arm outcome.
        complete: bool,
    },
}

#[derive(Debug, Default)]
struct Cache {
    one: OnceLock<Region>,
    per_y2: RwLock<HashMap<u64, Region>>,
}

/// A one- or two-sample design.
#[derive(Debug, Serialize)]
pub struct Design {
    pub decision: DecisionFunction,
    pub arm1: Arm,
    pub arm2: Option<Arm>,
    /// Mass allowed outside truncated outcome ranges.
    pub eps: f64,
    #[serde(skip)]
    cache: Cache,
}

impl Clone for Design {
    fn clone(&self) -> Self {
        Design {
            decision: self.decision.clone(),
            arm1: self.arm1.clone(),
            arm2: self.arm2.clone(),
            eps: self.eps,
            cache: Cache::default(),
        }
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-9,
        max_subdivisions: 200,
    }
}

impl Design {
    pub fn one_sample(decision: DecisionFunction, prior: Mixture, n: f64) -> Result<Self> {
        decision.validate()?;
        if decision.arity != Arity::OneSample {
            return Err(Error::invalid("a one-sample design needs a one-sample decision"));
        }
        Ok(Design {
            decision,
            arm1: Arm::new(prior, n)?,
            arm2: None,
            eps: DEFAULT_EPS,
            cache: Cache::default(),
        })
    }

    pub fn two_sample(decision: DecisionFunction, prior1: Mixture, n1: f64, prior2: Mixture, n2: f64) -> Result<Self> {
        decision.validate()?;
        if decision.arity != Arity::TwoSample {
            return Err(Error::invalid("a two-sample design needs a two-sample decision"));
        }
        if !prior1.same_family(&prior2) {
            return Err(Error::FamilyMismatch(format!(
                "arm priors are {:?} and {:?}",
                prior1.family(),
                prior2.family()
            )));
        }
        decision.link.check_family(&prior1.family())?;
        Ok(Design {
            decision,
            arm1: Arm::new(prior1, n1)?,
            arm2: Some(Arm::new(prior2, n2)?),
            eps: DEFAULT_EPS,
            cache: Cache::default(),
        })
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.1) {
            return Err(Error::invalid(format!("eps must lie in (0, 0.1), got {eps}")));
        }
        self.eps = eps;
        self.cache = Cache::default();
        Ok(self)
    }

    fn above(&self) -> bool {
        !self.decision.lower_tail
    }

    fn arm2(&self) -> Result<&Arm> {
        self.arm2
            .as_ref()
            .ok_or_else(|| Error::invalid("this is a one-sample design"))
    }

    fn require_one_sample(&self) -> Result<()> {
        if self.arm2.is_some() {
            Err(Error::invalid("this is a two-sample design"))
        } else {
            Ok(())
        }
    }

    /// Decision at observed outcome(s).
    pub fn decide(&self, y1: f64, y2: Option<f64>) -> Result<bool> {
        let post1 = self.arm1.posterior(y1)?;
        match (&self.arm2, y2) {
            (None, None) => self.decision.evaluate(&post1, None),
            (Some(arm2), Some(y2)) => self.decision.evaluate(&post1, Some(&arm2.posterior(y2)?)),
            _ => Err(Error::invalid("number of outcomes does not match the design")),
        }
    }

    /// Success region of the one-sample design; computed once and cached.
    pub fn region(&self) -> Result<&Region> {
        self.require_one_sample()?;
        if let Some(r) = self.cache.one.get() {
            return Ok(r);
        }
        let r = self.compute_region1()?;
        Ok(self.cache.one.get_or_init(|| r))
    }

    fn compute_region1(&self) -> Result<Region> {
        let arm = &self.arm1;
        let decide = |y: u64| -> Result<bool> { self.decision.evaluate(&arm.posterior(y as f64)?, None) };
        match arm.endpoint() {
            Endpoint::Binomial => {
                let n = arm.n as u64;
                count_region(decide, Some(n), self.above(), n <= 50 * EXHAUSTIVE_MAX)
            }
            Endpoint::Poisson => count_region(decide, None, self.above(), false),
            Endpoint::Normal { sigma } => {
                let margin = |i: usize, y: f64| self.decision.margin(i, &arm.posterior(y)?, None);
                continuous_region(
                    margin,
                    self.decision.criteria.len(),
                    self.above(),
                    arm.prior.mean(),
                    arm.se() + arm.prior.sd(),
                    1e-8 * sigma,
                )
            }
        }
    }

    /// Success region in the first-arm outcome given the second-arm outcome.
    pub fn region_given(&self, y2: f64) -> Result<Region> {
        let arm2 = self.arm2()?;
        let discrete = !matches!(arm2.endpoint(), Endpoint::Normal { .. });
        if discrete {
            if !(y2 >= 0.0 && y2.fract() == 0.0) || (arm2.endpoint() == Endpoint::Binomial && y2 > arm2.n) {
                return Err(Error::invalid(format!("second-arm outcome {y2} is not a valid count")));
            }
            let key = y2 as u64;
            if let Some(r) = self.cache.per_y2.read().expect("cache lock").get(&key) {
                return Ok(r.clone());
            }
            let r = self.compute_region2(y2)?;
            self.cache.per_y2.write().expect("cache lock").insert(key, r.clone());
            Ok(r)
        } else {
            self.compute_region2(y2)
        }
    }

    fn compute_region2(&self, y2: f64) -> Result<Region> {
        let arm1 = &self.arm1;
        let arm2 = self.arm2()?;
        let post2 = arm2.posterior(y2)?;
        let decide = |y: u64| -> Result<bool> { self.decision.evaluate(&arm1.posterior(y as f64)?, Some(&post2)) };
        match arm1.endpoint() {
            Endpoint::Binomial => {
                let n = arm1.n as u64;
                count_region(decide, Some(n), self.above(), n <= EXHAUSTIVE_MAX)
            }
            Endpoint::Poisson => count_region(decide, None, self.above(), false),
            Endpoint::Normal { sigma } => {
                let margin = |i: usize, y: f64| self.decision.margin(i, &arm1.posterior(y)?, Some(&post2));
                let shift: f64 = self.decision.criteria.iter().map(|c| c.q.abs()).fold(0.0, f64::max);
                continuous_region(
                    margin,
                    self.decision.criteria.len(),
                    self.above(),
                    arm1.prior.mean(),
                    arm1.se() + arm1.prior.sd() + (y2 - arm2.prior.mean()).abs() + shift,
                    1e-8 * sigma,
                )
            }
        }
    }

    /// Second-arm outcomes carrying `1 - eps` of the prior-predictive mass,
    /// used when tabulating two-sample boundaries.
    fn y2_table(&self) -> Result<(Vec<f64>, bool)> {
        let arm2 = self.arm2()?;
        match arm2.endpoint() {
            Endpoint::Binomial => Ok(((0..=arm2.n as u64).map(|y| y as f64).collect(), true)),
            Endpoint::Poisson => {
                let pred = predictive(&arm2.prior, arm2.n)?;
                let top = count_upper(&pred, self.eps);
                Ok(((0..=top).map(|y| y as f64).collect(), false))
            }
            Endpoint::Normal { .. } => {
                let pred = predictive_as_mixture(&predictive(&arm2.prior, arm2.n)?)?;
                let lo = pred.quantile(self.eps / 2.0)?;
                let hi = pred.quantile(1.0 - self.eps / 2.0)?;
                let m = 40;
                Ok(((0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect(), false))
            }
        }
    }

    /// Tabulate the decision boundary.
    pub fn boundary(&self) -> Result<Boundary> {
        if self.arm2.is_none() {
            return Ok(Boundary::OneSample {
                region: self.region()?.clone(),
            });
        }
        let (ys, complete) = self.y2_table()?;
        let rows = ys
            .into_iter()
            .map(|y2| {
                Ok(BoundaryRow {
                    y2,
                    region: self.region_given(y2)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let above = self.above();
        let pos: Option<Vec<f64>> = rows.iter().map(|r| r.region.position(above)).collect();
        let monotone = pos.is_some_and(|p| p.windows(2).all(|w| w[0] <= w[1]) || p.windows(2).all(|w| w[0] >= w[1]));
        Ok(Boundary::TwoSample {
            rows,
            monotone,
            complete,
        })
    }

    /// Probability of success when the true parameter is `theta`
    /// (one-sample designs).
    pub fn oc1(&self, theta: f64) -> Result<f64> {
        self.require_one_sample()?;
        self.arm1.check_theta(theta)?;
        let region = self.region()?;
        arm_prob(&self.arm1, theta, region)
    }

    /// Probability of success when the true parameters are `theta1`, `theta2`
    /// (two-sample designs).
    pub fn oc2(&self, theta1: f64, theta2: f64) -> Result<f64> {
        let arm2 = self.arm2()?;
        self.arm1.check_theta(theta1)?;
        arm2.check_theta(theta2)?;
        match arm2.endpoint() {
            Endpoint::Binomial => {
                let w2 = binomial_pmf_all(arm2.n as u64, theta2);
                self.sum_over_y2(w2.into_iter().enumerate().map(|(y, w)| (y as u64, w)), |r| {
                    arm_prob(&self.arm1, theta1, r)
                })
            }
            Endpoint::Poisson => {
                let lam = theta2 * arm2.n;
                let top = poisson_quantile(1.0 - self.eps, lam);
                self.sum_over_y2((0..=top).map(|y| (y, poisson_ln_pmf(y, lam).exp())), |r| {
                    arm_prob(&self.arm1, theta1, r)
                })
            }
            Endpoint::Normal { .. } => {
                let parts2 = [(1.0, theta2, arm2.se())];
                self.integrate_over_y2(&parts2, |r| arm_prob(&self.arm1, theta1, r))
            }
        }
    }

    /// Probability of success averaged over `theta ~ prior` (one-sample).
    pub fn pos1(&self, prior: &Mixture) -> Result<f64> {
        self.require_one_sample()?;
        self.check_prior(prior)?;
        let region = self.region()?;
        let pred = predictive(prior, self.arm1.n)?;
        predictive_prob(&pred, region)
    }

    /// Probability of success averaged over independent
    /// `theta1 ~ prior1`, `theta2 ~ prior2` (two-sample).
    pub fn pos2(&self, prior1: &Mixture, prior2: &Mixture) -> Result<f64> {
        let arm2 = self.arm2()?;
        self.check_prior(prior1)?;
        self.check_prior(prior2)?;
        let pred1 = predictive(prior1, self.arm1.n)?;
        let pred2 = predictive(prior2, arm2.n)?;
        match pred2.kind {
            PredictiveKind::BetaBinomial { n } => {
                self.sum_over_y2((0..=n).map(|y| (y, pred2.pmf(y))), |r| predictive_prob(&pred1, r))
            }
            PredictiveKind::NegativeBinomial { .. } => {
                let top = count_upper(&pred2, self.eps);
                self.sum_over_y2((0..=top).map(|y| (y, pred2.pmf(y))), |r| predictive_prob(&pred1, r))
            }
            PredictiveKind::Normal { .. } => {
                let parts2: Vec<(f64, f64, f64)> = pred2.components.iter().map(|c| (c.w, c.a, c.b)).collect();
                self.integrate_over_y2(&parts2, |r| predictive_prob(&pred1, r))
            }
        }
    }

    /// [`Design::oc1`] over a grid of parameters.
    pub fn oc1_grid(&self, thetas: &[f64]) -> Result<Vec<f64>> {
        thetas.iter().map(|&t| self.oc1(t)).collect()
    }

    /// [`Design::oc2`] over paired parameter vectors.
    pub fn oc2_grid(&self, theta1: &[f64], theta2: &[f64]) -> Result<Vec<f64>> {
        if theta1.len() != theta2.len() {
            return Err(Error::invalid(format!(
                "parameter vectors differ in length ({} vs {})",
                theta1.len(),
                theta2.len()
            )));
        }
        theta1.iter().zip(theta2).map(|(&a, &b)| self.oc2(a, b)).collect()
    }

    fn check_prior(&self, prior: &Mixture) -> Result<()> {
        if prior.same_family(&self.arm1.prior) {
            Ok(())
        } else {
            Err(Error::FamilyMismatch(format!(
                "parameter distribution is {:?} but the design uses {:?}",
                prior.family(),
                self.arm1.prior.family()
            )))
        }
    }

    fn sum_over_y2<I, P>(&self, weights: I, prob1: P) -> Result<f64>
    where
        I: Iterator<Item = (u64, f64)>,
        P: Fn(&Region) -> Result<f64>,
    {
        let mut total = 0.0;
        for (y2, w) in weights {
            if w == 0.0 {
                continue;
            }
            total += w * prob1(&self.region_given(y2 as f64)?)?;
        }
        Ok(total.clamp(0.0, 1.0))
    }

    /// Integrate the first-arm success probability against a normal-mixture
    /// law of the second-arm sample mean.
    fn integrate_over_y2<P>(&self, parts2: &[(f64, f64, f64)], prob1: P) -> Result<f64>
    where
        P: Fn(&Region) -> Result<f64>,
    {
        let z = norm_quantile(1.0 - self.eps / 2.0);
        let mut total = 0.0;
        for &(w, m, s) in parts2 {
            let failure = std::cell::RefCell::new(None);
            let f = |y2: f64| match self.region_given(y2).and_then(|r| prob1(&r)) {
                Ok(p) => p * norm_pdf((y2 - m) / s) / s,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            };
            let r = integrate(f, m - z * s, m + z * s, quad_opts());
            if let Some(e) = failure.into_inner() {
                return Err(e);
            }
            total += w * r.value;
        }
        Ok(total.clamp(0.0, 1.0))
    }
}

/// P(outcome of `arm` lands in `region` | θ).
fn arm_prob(arm: &Arm, theta: f64, region: &Region) -> Result<f64> {
    match arm.endpoint() {
        Endpoint::Binomial => Ok(CountLaw::Table(binomial_pmf_all(arm.n as u64, theta)).prob(region)),
        Endpoint::Poisson => Ok(CountLaw::Poisson(theta * arm.n).prob(region)),
        Endpoint::Normal { .. } => normal_prob(&[(1.0, theta, arm.se())], region),
    }
}

fn predictive_prob(pred: &PredictiveMixture, region: &Region) -> Result<f64> {
    match pred.kind {
        PredictiveKind::BetaBinomial { n } => Ok(CountLaw::Table((0..=n).map(|y| pred.pmf(y)).collect()).prob(region)),
        PredictiveKind::NegativeBinomial { .. } => Ok(CountLaw::Predictive(pred).prob(region)),
        PredictiveKind::Normal { .. } => {
            let parts: Vec<(f64, f64, f64)> = pred.components.iter().map(|c| (c.w, c.a, c.b)).collect();
            normal_prob(&parts, region)
        }
    }
}

/// Smallest count with predictive cdf at least `1 - eps`.
fn count_upper(pred: &PredictiveMixture, eps: f64) -> u64 {
    let mut cum = 0.0;
    let mut y = 0u64;
    loop {
        cum += pred.pmf(y);
        if cum >= 1.0 - eps || y > 100_000_000 {
            return y;
        }
        y += 1;
    }
}

/// Normal predictive components as a mixture, for quantiles.
fn predictive_as_mixture(pred: &PredictiveMixture) -> Result<Mixture> {
    let comps: Vec<(f64, f64, f64)> = pred.components.iter().map(|c| (c.w, c.a, c.b)).collect();
    Mixture::normal(1.0, &comps)
}
