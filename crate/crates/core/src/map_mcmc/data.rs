//! Historical study data and hyperprior specifications.

use serde::{Deserialize, Serialize};

use crate::conjugate::ObservedData;
use crate::error::{Error, Result};
use crate::mixture::{Family, GammaLikelihood, Link};
use crate::numerics::special::{logit, norm_ln_pdf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub id: String,
    pub data: ObservedData,
}

/// Per-study summaries; all rows carry the same kind of outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Study>", into = "Vec<Study>")]
pub struct StudyDataset {
    rows: Vec<Study>,
}

impl TryFrom<Vec<Study>> for StudyDataset {
    type Error = Error;

    fn try_from(rows: Vec<Study>) -> Result<Self> {
        StudyDataset::new(rows)
    }
}

impl From<StudyDataset> for Vec<Study> {
    fn from(d: StudyDataset) -> Self {
        d.rows
    }
}

fn same_kind(a: &ObservedData, b: &ObservedData) -> bool {
    use ObservedData::*;
    matches!(
        (a, b),
        (Binomial { .. }, Binomial { .. })
            | (Normal { .. } | NormalSe { .. }, Normal { .. } | NormalSe { .. })
            | (Poisson { .. }, Poisson { .. })
    )
}

impl StudyDataset {
    pub fn new(rows: Vec<Study>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("a dataset needs at least one study"));
        }
        for (i, row) in rows.iter().enumerate() {
            let ok = match row.data {
                ObservedData::Binomial { r, n } => n >= 1 && r <= n,
                ObservedData::NormalSe { mean, se } => mean.is_finite() && se.is_finite() && se > 0.0,
                ObservedData::Normal { mean, n } => mean.is_finite() && n.is_finite() && n > 0.0,
                ObservedData::Poisson { exposure, .. } => exposure.is_finite() && exposure > 0.0,
                ObservedData::Exponential { .. } => false,
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "study {} ('{}'): invalid outcome {:?}",
                    i + 1,
                    row.id,
                    row.data
                )));
            }
            if !same_kind(&rows[0].data, &row.data) {
                return Err(Error::invalid(format!(
                    "study {} ('{}') has a different outcome type than the first study",
                    i + 1,
                    row.id
                )));
            }
        }
        Ok(StudyDataset { rows })
    }

    pub fn binomial(rows: &[(&str, u64, u64)]) -> Result<Self> {
        StudyDataset::new(
            rows.iter()
                .map(|&(id, r, n)| Study {
                    id: id.to_string(),
                    data: ObservedData::Binomial { r, n },
                })
                .collect(),
        )
    }

    pub fn normal(rows: &[(&str, f64, f64)]) -> Result<Self> {
        StudyDataset::new(
            rows.iter()
                .map(|&(id, mean, se)| Study {
                    id: id.to_string(),
                    data: ObservedData::NormalSe { mean, se },
                })
                .collect(),
        )
    }

    pub fn poisson(rows: &[(&str, u64, f64)]) -> Result<Self> {
        StudyDataset::new(
            rows.iter()
                .map(|&(id, count, exposure)| Study {
                    id: id.to_string(),
                    data: ObservedData::Poisson { count, exposure },
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[Study] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Total subjects (binomial) or exposure (poisson); `None` for normal data.
    pub fn total_size(&self) -> Option<f64> {
        let mut total = 0.0;
        for r in &self.rows {
            total += match r.data {
                ObservedData::Binomial { n, .. } => n as f64,
                ObservedData::Poisson { exposure, .. } => exposure,
                _ => return None,
            };
        }
        Some(total)
    }

    /// Check the rows against the response family and return the link.
    pub fn link_for(&self, family: Family) -> Result<Link> {
        let first = &self.rows[0].data;
        match (family, first) {
            (Family::Beta, ObservedData::Binomial { .. }) => Ok(Link::Logit),
            (Family::Normal { .. }, ObservedData::Normal { .. } | ObservedData::NormalSe { .. }) => Ok(Link::Identity),
            (
                Family::Gamma {
                    likelihood: GammaLikelihood::Poisson,
                },
                ObservedData::Poisson { .. },
            ) => Ok(Link::Log),
            (
                Family::Gamma {
                    likelihood: GammaLikelihood::Exponential,
                },
                _,
            ) => Err(Error::Unsupported(
                "meta-analysis of exponential outcomes is not supported".into(),
            )),
            _ => Err(Error::FamilyMismatch(format!(
                "{} family does not match the dataset's outcome type",
                family.name()
            ))),
        }
    }
}

/// Link-scale log-likelihood of one study's outcome.
#[derive(Debug, Clone, Copy)]
pub(crate) enum StudyLik {
    Binomial { r: f64, n: f64 },
    Normal { y: f64, se: f64 },
    Poisson { s: f64, ln_e: f64, e: f64 },
}

impl StudyLik {
    pub(crate) fn new(data: &ObservedData, family: Family) -> Self {
        match *data {
            ObservedData::Binomial { r, n } => StudyLik::Binomial {
                r: r as f64,
                n: n as f64,
            },
            ObservedData::NormalSe { mean, se } => StudyLik::Normal { y: mean, se },
            ObservedData::Normal { mean, n } => StudyLik::Normal {
                y: mean,
                se: family.sigma().unwrap_or(1.0) / n.sqrt(),
            },
            ObservedData::Poisson { count, exposure } => StudyLik::Poisson {
                s: count as f64,
                ln_e: exposure.ln(),
                e: exposure,
            },
            ObservedData::Exponential { .. } => unreachable!("rejected by StudyDataset::new"),
        }
    }

    pub(crate) fn ln_lik(&self, theta: f64) -> f64 {
        match *self {
            StudyLik::Binomial { r, n } => {
                // r·θ - n·log(1 + e^θ), evaluated without overflow
                let softplus = if theta > 0.0 {
                    theta + (-theta).exp().ln_1p()
                } else {
                    theta.exp().ln_1p()
                };
                r * theta - n * softplus
            }
            StudyLik::Normal { y, se } => {
                let z = (y - theta) / se;
                -0.5 * z * z
            }
            StudyLik::Poisson { s, ln_e, e } => s * (theta + ln_e) - e * theta.exp(),
        }
    }

    /// Empirical link-scale estimate used for initial values.
    pub(crate) fn empirical(&self) -> f64 {
        match *self {
            StudyLik::Binomial { r, n } => logit((r + 0.5) / (n + 1.0)),
            StudyLik::Normal { y, .. } => y,
            StudyLik::Poisson { s, e, .. } => ((s + 0.5) / e).ln(),
        }
    }
}

/// Prior for the between-study standard deviation τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum TauPrior {
    HalfNormal {
        sd: f64,
    },
    /// Normal(mean, sd) truncated to τ ≥ 0.
    TruncatedNormal {
        mean: f64,
        sd: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
    LogNormal {
        meanlog: f64,
        sdlog: f64,
    },
}

impl TauPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TauPrior::HalfNormal { sd } => sd > 0.0 && sd.is_finite(),
            TauPrior::TruncatedNormal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            TauPrior::Uniform { lower, upper } => lower >= 0.0 && upper > lower && upper.is_finite(),
            TauPrior::LogNormal { meanlog, sdlog } => meanlog.is_finite() && sdlog > 0.0 && sdlog.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid tau prior {self:?}")))
        }
    }

    /// Log density up to an additive constant.
    pub fn ln_pdf(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            TauPrior::HalfNormal { sd } => -0.5 * (tau / sd).powi(2),
            TauPrior::TruncatedNormal { mean, sd } => -0.5 * ((tau - mean) / sd).powi(2),
            TauPrior::Uniform { lower, upper } => {
                if tau >= lower && tau <= upper {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            TauPrior::LogNormal { meanlog, sdlog } => norm_ln_pdf(tau.ln(), meanlog, sdlog) - tau.ln(),
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let z = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
        match *self {
            TauPrior::HalfNormal { sd } => (sd * z(rng)).abs(),
            TauPrior::TruncatedNormal { mean, sd } => loop {
                let t = mean + sd * z(rng);
                if t > 0.0 {
                    break t;
                }
            },
            TauPrior::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            TauPrior::LogNormal { meanlog, sdlog } => (meanlog + sdlog * z(rng)).exp(),
        }
    }
}

/// Normal prior on the link-scale intercept μ plus the τ prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    pub mu_mean: f64,
    pub mu_sd: f64,
    pub tau: TauPrior,
}

impl HyperPriors {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_mean.is_finite() && self.mu_sd.is_finite() && self.mu_sd > 0.0) {
            return Err(Error::invalid(format!(
                "intercept prior needs a finite mean and sd > 0, got ({}, {})",
                self.mu_mean, self.mu_sd
            )));
        }
        self.tau.validate()
    }
}

impl Default for HyperPriors {
    fn default() -> Self {
        HyperPriors {
            mu_mean: 0.0,
            mu_sd: 2.0,
            tau: TauPrior::HalfNormal { sd: 1.0 },
        }
    }
}
