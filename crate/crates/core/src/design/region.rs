//! Success regions of a decision in outcome space and their probabilities.

use serde::{Deserialize, Serialize};

use crate::conjugate::PredictiveMixture;
use crate::error::{Error, Result};
use crate::numerics::special::{gamma_lr, norm_cdf, poisson_cdf};

/// Set of outcomes at which the decision is a success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// No outcome succeeds.
    Empty,
    /// Every outcome succeeds.
    Full,
    /// Success iff `y >= critical` (`above`) or `y <= critical`.
    /// For counts `critical` is the extreme successful outcome.
    Threshold { critical: f64, above: bool },
    /// Explicit successful counts, used when the successes do not form a
    /// half-line.
    Set { outcomes: Vec<u64> },
}

impl Region {
    pub fn contains(&self, y: f64) -> bool {
        match self {
            Region::Empty => false,
            Region::Full => true,
            Region::Threshold { critical, above } => {
                if *above {
                    y >= *critical
                } else {
                    y <= *critical
                }
            }
            Region::Set { outcomes } => y >= 0.0 && y.fract() == 0.0 && outcomes.binary_search(&(y as u64)).is_ok(),
        }
    }

    /// Summarise the success flags of the counts `0..=n`.
    pub(crate) fn from_flags(flags: &[bool], above: bool) -> Region {
        let hits: Vec<u64> = flags
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(i, _)| i as u64)
            .collect();
        if hits.is_empty() {
            return Region::Empty;
        }
        if hits.len() == flags.len() {
            return Region::Full;
        }
        let contiguous = hits.windows(2).all(|w| w[1] == w[0] + 1);
        let last = (flags.len() - 1) as u64;
        if contiguous && above && *hits.last().unwrap() == last {
            Region::Threshold {
                critical: hits[0] as f64,
                above,
            }
        } else if contiguous && !above && hits[0] == 0 {
            Region::Threshold {
                critical: *hits.last().unwrap() as f64,
                above,
            }
        } else {
            Region::Set { outcomes: hits }
        }
    }

    /// Position of the boundary used to judge monotonicity across rows;
    /// `None` for explicit sets.
    pub(crate) fn position(&self, above: bool) -> Option<f64> {
        let inf = f64::INFINITY;
        match self {
            Region::Empty => Some(if above { inf } else { -inf }),
            Region::Full => Some(if above { -inf } else { inf }),
            Region::Threshold { critical, .. } => Some(*critical),
            Region::Set { .. } => None,
        }
    }
}

/// Law of a count outcome.
pub(crate) enum CountLaw<'a> {
    /// Finite support `0..=n` with an explicit pmf table.
    Table(Vec<f64>),
    Poisson(f64),
    Predictive(&'a PredictiveMixture),
}

impl CountLaw<'_> {
    fn pmf(&self, y: u64) -> f64 {
        match self {
            CountLaw::Table(t) => t.get(y as usize).copied().unwrap_or(0.0),
            CountLaw::Poisson(lam) => crate::numerics::special::poisson_ln_pmf(y, *lam).exp(),
            CountLaw::Predictive(p) => p.pmf(y),
        }
    }

    /// P(Y ≤ c)
    fn cdf(&self, c: u64) -> f64 {
        match self {
            CountLaw::Table(t) => t.iter().take(c as usize + 1).sum(),
            CountLaw::Poisson(lam) => poisson_cdf(c, *lam),
            CountLaw::Predictive(p) => (0..=c).map(|y| p.pmf(y)).sum::<f64>().min(1.0),
        }
    }

    /// P(Y ≥ c)
    fn sf(&self, c: u64) -> f64 {
        match self {
            CountLaw::Table(t) => t.iter().skip(c as usize).sum(),
            CountLaw::Poisson(lam) => {
                if c == 0 || *lam <= 0.0 {
                    if c == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    gamma_lr(c as f64, *lam)
                }
            }
            CountLaw::Predictive(_) => {
                if c == 0 {
                    1.0
                } else {
                    (1.0 - self.cdf(c - 1)).max(0.0)
                }
            }
        }
    }

    pub(crate) fn prob(&self, region: &Region) -> f64 {
        match region {
            Region::Empty => 0.0,
            Region::Full => 1.0,
            Region::Threshold { critical, above } => {
                let c = *critical as u64;
                if *above {
                    self.sf(c)
                } else {
                    self.cdf(c)
                }
            }
            Region::Set { outcomes } => outcomes.iter().map(|&y| self.pmf(y)).sum(),
        }
    }
}

/// Probability of a region under a normal mixture given as `(w, mean, sd)`.
pub(crate) fn normal_prob(parts: &[(f64, f64, f64)], region: &Region) -> Result<f64> {
    match region {
        Region::Empty => Ok(0.0),
        Region::Full => Ok(1.0),
        Region::Threshold { critical, above } => Ok(parts
            .iter()
            .map(|&(w, m, s)| {
                let z = (critical - m) / s;
                w * if *above { norm_cdf(-z) } else { norm_cdf(z) }
            })
            .sum()),
        Region::Set { .. } => Err(Error::numerical(
            "explicit outcome sets are not defined for continuous outcomes",
        )),
    }
}

/// Success region over the counts `0..=n` (or all counts when `n` is
/// `None`) of a decision that is monotone in the count.
///
/// With `exhaustive`, every count is evaluated and the region is built from
/// the flags, so a non-monotone decision is reported faithfully as a set.
/// Otherwise the boundary is located by bisection, which assumes the
/// decision only switches once.
pub(crate) fn count_region<F>(decide: F, n: Option<u64>, above: bool, exhaustive: bool) -> Result<Region>
where
    F: Fn(u64) -> Result<bool>,
{
    if let (Some(n), true) = (n, exhaustive) {
        let flags = (0..=n).map(&decide).collect::<Result<Vec<bool>>>()?;
        return Ok(Region::from_flags(&flags, above));
    }
    // `fail` and `succ` bracket the switch: for `above` all counts below the
    // switch fail; otherwise all counts above it fail.
    let (at_zero, cap) = (decide(0)?, n.unwrap_or(1 << 40));
    if above {
        if at_zero {
            return Ok(Region::Full);
        }
        let (mut fail, mut succ) = (0u64, 1u64.min(cap));
        while !decide(succ)? {
            if succ == cap {
                return Ok(Region::Empty);
            }
            fail = succ;
            succ = (succ * 2).min(cap);
        }
        while succ - fail > 1 {
            let mid = fail + (succ - fail) / 2;
            if decide(mid)? {
                succ = mid;
            } else {
                fail = mid;
            }
        }
        Ok(Region::Threshold {
            critical: succ as f64,
            above,
        })
    } else {
        if !at_zero {
            return Ok(Region::Empty);
        }
        let (mut succ, mut fail) = (0u64, 1u64.min(cap));
        while decide(fail)? {
            if fail == cap {
                return Ok(Region::Full);
            }
            succ = fail;
            fail = (fail * 2).min(cap);
        }
        while fail - succ > 1 {
            let mid = succ + (fail - succ) / 2;
            if decide(mid)? {
                succ = mid;
            } else {
                fail = mid;
            }
        }
        Ok(Region::Threshold {
            critical: succ as f64,
            above,
        })
    }
}

/// Success region of a continuous outcome for criteria whose margins are
/// monotone in the outcome (increasing when `above`).
///
/// Each criterion's switch point is bracketed by expanding outwards from
/// `center` in steps of `scale` and then bisected to `tol`. The region is
/// the intersection of the per-criterion half-lines.
pub(crate) fn continuous_region<F>(
    margin: F,
    criteria: usize,
    above: bool,
    center: f64,
    scale: f64,
    tol: f64,
) -> Result<Region>
where
    F: Fn(usize, f64) -> Result<f64>,
{
    let toward = if above { 1.0 } else { -1.0 };
    let mut critical: Option<f64> = None;
    for i in 0..criteria {
        let succ_at = |y: f64| margin(i, y).map(|m| m > 0.0);
        let mut succ = center + toward * scale;
        let mut step = scale;
        let mut found = false;
        for _ in 0..80 {
            if succ_at(succ)? {
                found = true;
                break;
            }
            step *= 2.0;
            succ += toward * step;
        }
        if !found {
            return Ok(Region::Empty);
        }
        let mut fail = center - toward * scale;
        step = scale;
        found = false;
        for _ in 0..80 {
            if !succ_at(fail)? {
                found = true;
                break;
            }
            step *= 2.0;
            fail -= toward * step;
        }
        if !found {
            continue;
        }
        while (succ - fail).abs() > tol {
            let mid = 0.5 * (succ + fail);
            if mid == succ || mid == fail {
                break;
            }
            if succ_at(mid)? {
                succ = mid;
            } else {
                fail = mid;
            }
        }
        let c = 0.5 * (succ + fail);
        critical = Some(match critical {
            None => c,
            Some(prev) if above => prev.max(c),
            Some(prev) => prev.min(c),
        });
    }
    Ok(match critical {
        None => Region::Full,
        Some(c) => Region::Threshold { critical: c, above },
    })
}
