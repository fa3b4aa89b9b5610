//! Conjugate parametric mixtures of normal, beta or gamma densities.
//!
//! A [`Mixture`] is an immutable list of `(w, a, b)` triplets attached to a
//! [`Family`]. Normal components are `(w, mean, sd)` and carry the known
//! sampling standard deviation of the outcome in the family; beta components
//! are `(w, a, b)`; gamma components are `(w, shape, rate)` and carry the
//! likelihood they are meant to be combined with.

mod diff;
mod kernel;

pub use diff::{diff_cdf, diff_density, diff_quantile, diff_sample};
pub use kernel::Kernel;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::roots::{brent, RootOptions};
use crate::numerics::special::{log_sum_exp, logistic, logit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaLikelihood {
    Poisson,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    /// Normal components with known sampling standard deviation `sigma`.
    Normal {
        sigma: f64,
    },
    Beta,
    Gamma {
        likelihood: GammaLikelihood,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Normal { .. } => "normal",
            Family::Beta => "beta",
            Family::Gamma { .. } => "gamma",
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            Family::Normal { sigma } => Some(*sigma),
            _ => None,
        }
    }

    pub fn likelihood(&self) -> Option<GammaLikelihood> {
        match self {
            Family::Gamma { likelihood } => Some(*likelihood),
            _ => None,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Family::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Beta => (0.0, 1.0),
            Family::Gamma { .. } => (0.0, f64::INFINITY),
        }
    }

    pub fn kernel(&self, a: f64, b: f64) -> Kernel {
        match self {
            Family::Normal { .. } => Kernel::Normal { mean: a, sd: b },
            Family::Beta => Kernel::Beta { a, b },
            Family::Gamma { .. } => Kernel::Gamma { shape: a, rate: b },
        }
    }

    fn validate(&self) -> Result<()> {
        if let Family::Normal { sigma } = self {
            if !(sigma.is_finite() && *sigma > 0.0) {
                return Err(Error::invalid(format!("normal family needs sigma > 0, got {sigma}")));
            }
        }
        Ok(())
    }

    fn check_params(&self, a: f64, b: f64) -> Result<()> {
        let ok = match self {
            Family::Normal { .. } => a.is_finite() && b.is_finite() && b > 0.0,
            Family::Beta | Family::Gamma { .. } => a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid {} component parameters ({a}, {b})",
                self.name()
            )))
        }
    }

    /// Whether `x` lies in the closed support.
    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x.is_finite() && x >= lo && x <= hi
    }
}

/// Transformation applied to parameters before forming differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Identity,
    Logit,
    Log,
}

impl Link {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Link::Identity => x,
            Link::Logit => logit(x),
            Link::Log => x.ln(),
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            Link::Identity => y,
            Link::Logit => logistic(y),
            Link::Log => y.exp(),
        }
    }

    /// d g⁻¹(y) / dy
    pub fn inverse_derivative(&self, y: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Logit => {
                let p = logistic(y);
                p * (1.0 - p)
            }
            Link::Log => y.exp(),
        }
    }

    pub fn check_family(&self, family: &Family) -> Result<()> {
        let ok = match self {
            Link::Identity => true,
            Link::Logit => matches!(family, Family::Beta),
            Link::Log => matches!(family, Family::Beta | Family::Gamma { .. }),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{self:?} link is incompatible with the {} family",
                family.name()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub w: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub p: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSummary {
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<QuantilePoint>,
}

pub const SUMMARY_PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct Mixture {
    family: Family,
    components: Vec<Component>,
}

#[derive(Serialize, Deserialize)]
struct MixtureRepr {
    family: String,
    sigma: Option<f64>,
    likelihood: Option<GammaLikelihood>,
    components: Vec<[f64; 3]>,
}

impl TryFrom<MixtureRepr> for Mixture {
    type Error = Error;

    fn try_from(r: MixtureRepr) -> Result<Self> {
        let family = match (r.family.as_str(), r.sigma, r.likelihood) {
            ("normal", Some(sigma), None) => Family::Normal { sigma },
            ("beta", None, None) => Family::Beta,
            ("gamma", None, Some(likelihood)) => Family::Gamma { likelihood },
            ("normal", None, _) => return Err(Error::invalid("normal mixture requires sigma")),
            ("gamma", _, None) => return Err(Error::invalid("gamma mixture requires likelihood")),
            (f, _, _) if !["normal", "beta", "gamma"].contains(&f) => {
                return Err(Error::invalid(format!("unknown family '{f}'")))
            }
            _ => return Err(Error::invalid("sigma only for normal, likelihood only for gamma")),
        };
        let comps: Vec<(f64, f64, f64)> = r.components.iter().map(|c| (c[0], c[1], c[2])).collect();
        Mixture::new(family, &comps)
    }
}

impl From<Mixture> for MixtureRepr {
    fn from(m: Mixture) -> Self {
        MixtureRepr {
            family: m.family.name().to_string(),
            sigma: m.family.sigma(),
            likelihood: m.family.likelihood(),
            components: m.components.iter().map(|c| [c.w, c.a, c.b]).collect(),
        }
    }
}

impl Mixture {
    /// Build a mixture from `(w, a, b)` triplets; weights are renormalized.
    pub fn new(family: Family, components: &[(f64, f64, f64)]) -> Result<Self> {
        family.validate()?;
        if components.is_empty() {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        let mut total = 0.0;
        for &(w, a, b) in components {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("mixture weight {w} must be finite and >= 0")));
            }
            family.check_params(a, b)?;
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::invalid("mixture weights must have a positive sum"));
        }
        // Weights that already sum to one up to rounding are kept as given,
        // so serialised mixtures read back bit for bit.
        if (total - 1.0).abs() <= 8.0 * f64::EPSILON * components.len() as f64 {
            total = 1.0;
        }
        let components = components
            .iter()
            .map(|&(w, a, b)| Component { w: w / total, a, b })
            .collect();
        Ok(Mixture { family, components })
    }

    pub fn beta(components: &[(f64, f64, f64)]) -> Result<Self> {
        Mixture::new(Family::Beta, components)
    }

    pub fn normal(sigma: f64, components: &[(f64, f64, f64)]) -> Result<Self> {
        Mixture::new(Family::Normal { sigma }, components)
    }

    pub fn gamma(likelihood: GammaLikelihood, components: &[(f64, f64, f64)]) -> Result<Self> {
        Mixture::new(Family::Gamma { likelihood }, components)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn kernel(&self, k: usize) -> Kernel {
        let c = self.components[k];
        self.family.kernel(c.a, c.b)
    }

    pub fn kernels(&self) -> impl Iterator<Item = (f64, Kernel)> + '_ {
        self.components.iter().map(|c| (c.w, self.family.kernel(c.a, c.b)))
    }

    /// Same family, same σ, same likelihood tag.
    pub fn same_family(&self, other: &Mixture) -> bool {
        self.family == other.family
    }

    pub fn density(&self, x: f64) -> f64 {
        if !self.family.contains(x) {
            return 0.0;
        }
        self.kernels()
            .map(|(w, k)| if w > 0.0 { w * k.pdf(x) } else { 0.0 })
            .sum()
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        if !self.family.contains(x) {
            return f64::NEG_INFINITY;
        }
        let terms: Vec<f64> = self.kernels().map(|(w, k)| w.ln() + k.ln_pdf(x)).collect();
        log_sum_exp(&terms)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.kernels().map(|(w, k)| w * k.cdf(x)).sum::<f64>().clamp(0.0, 1.0)
    }

    /// 1 - cdf(x), accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        self.kernels().map(|(w, k)| w * k.sf(x)).sum::<f64>().clamp(0.0, 1.0)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("quantile probability {p} outside (0,1)")));
        }
        if self.len() == 1 {
            return Ok(self.kernel(0).quantile(p));
        }
        // The mixture quantile lies between the extreme component quantiles.
        let qs: Vec<f64> = self
            .kernels()
            .filter(|(w, _)| *w > 0.0)
            .map(|(_, k)| k.quantile(p))
            .collect();
        let lo = qs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= 0.0 {
            return Ok(lo);
        }
        let opts = RootOptions {
            x_tol: 1e-13,
            f_tol: 0.0,
            max_iter: 300,
        };
        let f = |x: f64| {
            if p < 0.5 {
                self.cdf(x) - p
            } else {
                (1.0 - p) - self.sf(x)
            }
        };
        let (flo, fhi) = (f(lo), f(hi));
        if flo.signum() == fhi.signum() {
            // Component quantiles carry their own rounding; when they do not
            // straddle the root the closer endpoint is already accurate.
            return Ok(if flo.abs() <= fhi.abs() { lo } else { hi });
        }
        if p < 0.5 && lo > 0.0 {
            // lower-tail quantiles of positive families can be tiny; search
            // in log x to keep relative precision
            let t_opts = RootOptions { x_tol: 1e-15, ..opts };
            return brent(|t| f(t.exp()), lo.ln(), hi.ln(), t_opts).map(f64::exp);
        }
        if p >= 0.5 && self.family == Family::Beta && hi < 1.0 {
            // same for the distance to 1 in the upper tail
            let t_opts = RootOptions { x_tol: 1e-15, ..opts };
            let g = |t: f64| f(-t.exp_m1());
            return brent(g, (-hi).ln_1p(), (-lo).ln_1p(), t_opts).map(|t| -t.exp_m1());
        }
        brent(f, lo, hi, opts)
    }

    pub fn mean(&self) -> f64 {
        self.kernels().map(|(w, k)| w * k.mean()).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let second: f64 = self
            .kernels()
            .map(|(w, k)| w * (k.variance() + k.mean() * k.mean()))
            .sum();
        (second - m * m).max(0.0)
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn summary(&self) -> Result<MixtureSummary> {
        let quantiles = SUMMARY_PROBS
            .iter()
            .map(|&p| {
                Ok(QuantilePoint {
                    p,
                    value: self.quantile(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MixtureSummary {
            mean: self.mean(),
            sd: self.sd(),
            quantiles,
        })
    }

    /// Mode of the mixture density, located by scanning component modes and
    /// refining with golden-section search.
    pub fn mode(&self) -> f64 {
        let (lo_s, hi_s) = self.family.support();
        let mut candidates: Vec<f64> = self.kernels().map(|(_, k)| k.mode()).collect();
        candidates.push(self.mean());
        let mut best = candidates[0];
        let mut best_ld = f64::NEG_INFINITY;
        for &c in &candidates {
            let ld = self.ln_density(c);
            if ld > best_ld || (ld == best_ld && ld.is_infinite()) {
                best_ld = ld;
                best = c;
            }
        }
        if best_ld.is_infinite() {
            return best;
        }
        let width = 2.0 * self.sd();
        let a = (best - width).max(lo_s);
        let b = (best + width).min(hi_s);
        let x = crate::numerics::roots::golden_section_max(|x| self.ln_density(x), a, b, 1e-12);
        if self.ln_density(x) >= best_ld {
            x
        } else {
            best
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// One draw: pick a component by weight, then draw from it.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.w;
            if u < acc {
                chosen = k;
                break;
            }
        }
        self.kernel(chosen).sample(rng)
    }

    /// Weighted union of mixtures of the same family.
    pub fn combine(mixes: &[&Mixture], weights: &[f64]) -> Result<Mixture> {
        if mixes.is_empty() || mixes.len() != weights.len() {
            return Err(Error::invalid("combine needs one weight per mixture"));
        }
        let family = mixes[0].family;
        if let Some(bad) = mixes.iter().find(|m| m.family != family) {
            return Err(Error::FamilyMismatch(format!(
                "cannot combine {:?} with {:?}",
                family, bad.family
            )));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || total <= 0.0 {
            return Err(Error::invalid("combine weights must be >= 0 with a positive sum"));
        }
        let comps: Vec<(f64, f64, f64)> = mixes
            .iter()
            .zip(weights)
            .flat_map(|(m, &outer)| m.components.iter().map(move |c| (outer * c.w, c.a, c.b)))
            .collect();
        Mixture::new(family, &comps)
    }

    /// Add a weakly-informative component: `(1-w)·self + w·vague`.
    ///
    /// The vague component has mean `mean` and carries `n` prior
    /// observations; see [`vague_component`].
    pub fn robustify(&self, weight: f64, mean: f64, n: f64) -> Result<Mixture> {
        if !(weight > 0.0 && weight < 1.0) {
            return Err(Error::invalid(format!("robust weight {weight} must lie in (0,1)")));
        }
        let vague = vague_component(self.family, mean, n)?;
        Mixture::combine(&[self, &vague], &[1.0 - weight, weight])
    }
}

/// Default prior sample size of the vague component used by
/// [`Mixture::robustify`] callers that do not choose one.
///
/// Beta mixtures use 2, which makes the component with mean 1/2 the uniform
/// Beta(1,1); all other families use unit information.
pub fn default_robust_n(family: Family) -> f64 {
    match family {
        Family::Beta => 2.0,
        _ => 1.0,
    }
}

/// Unit-information component with the given mean.
///
/// beta: Beta(m·n, (1-m)·n); gamma/poisson: Gamma(m·n, n); gamma/exponential:
/// Gamma(n, n/m); normal: Normal(m, σ/√n).
pub fn vague_component(family: Family, mean: f64, n: f64) -> Result<Mixture> {
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid(format!("vague component needs n > 0, got {n}")));
    }
    let out_of_support = || Error::OutOfSupport {
        value: mean,
        support: format!("{:?}", family.support()),
    };
    match family {
        Family::Beta => {
            if !(mean > 0.0 && mean < 1.0) {
                return Err(out_of_support());
            }
            Mixture::new(family, &[(1.0, mean * n, (1.0 - mean) * n)])
        }
        Family::Gamma { likelihood } => {
            if !(mean > 0.0 && mean.is_finite()) {
                return Err(out_of_support());
            }
            let (shape, rate) = match likelihood {
                GammaLikelihood::Poisson => (mean * n, n),
                GammaLikelihood::Exponential => (n, n / mean),
            };
            Mixture::new(family, &[(1.0, shape, rate)])
        }
        Family::Normal { sigma } => {
            if !mean.is_finite() {
                return Err(out_of_support());
            }
            Mixture::new(family, &[(1.0, mean, sigma / n.sqrt())])
        }
    }
}
