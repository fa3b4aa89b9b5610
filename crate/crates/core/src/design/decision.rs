//! Decision functions: products of posterior tail-probability criteria.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{diff_cdf, Link, Mixture};

/// One criterion: the posterior probability beyond `q` must exceed `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arity {
    OneSample,
    TwoSample,
}

/// A list of criteria that must all hold.
///
/// With `lower_tail = false` criterion `i` holds when `P(Δ > q_i) > p_i`;
/// with `lower_tail = true` when `P(Δ ≤ q_i) > p_i`. Δ is θ for one-sample
/// decisions and `g(θ₁) - g(θ₂)` for two-sample decisions with link `g`.
/// The comparison is strict, so a probability exactly equal to its
/// threshold fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFunction {
    pub criteria: Vec<Criterion>,
    pub lower_tail: bool,
    pub arity: Arity,
    #[serde(default)]
    pub link: Link,
}

fn criteria(p: &[f64], q: &[f64]) -> Result<Vec<Criterion>> {
    if p.is_empty() || p.len() != q.len() {
        return Err(Error::invalid(format!(
            "decision needs equally many probability ({}) and quantile ({}) thresholds",
            p.len(),
            q.len()
        )));
    }
    p.iter()
        .zip(q)
        .map(|(&p, &q)| {
            if !(p > 0.0 && p < 1.0) {
                Err(Error::invalid(format!("probability threshold {p} outside (0,1)")))
            } else if !q.is_finite() {
                Err(Error::invalid(format!("quantile threshold {q} is not finite")))
            } else {
                Ok(Criterion { p, q })
            }
        })
        .collect()
}

impl DecisionFunction {
    pub fn one_sample(p: &[f64], q: &[f64], lower_tail: bool) -> Result<Self> {
        Ok(DecisionFunction {
            criteria: criteria(p, q)?,
            lower_tail,
            arity: Arity::OneSample,
            link: Link::Identity,
        })
    }

    pub fn two_sample(p: &[f64], q: &[f64], lower_tail: bool, link: Link) -> Result<Self> {
        Ok(DecisionFunction {
            criteria: criteria(p, q)?,
            lower_tail,
            arity: Arity::TwoSample,
            link,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let p: Vec<f64> = self.criteria.iter().map(|c| c.p).collect();
        let q: Vec<f64> = self.criteria.iter().map(|c| c.q).collect();
        criteria(&p, &q).map(|_| ())
    }

    /// Probability named by criterion `c` under a one-sample posterior.
    fn prob1(&self, c: &Criterion, post: &Mixture) -> f64 {
        if self.lower_tail {
            post.cdf(c.q)
        } else {
            post.sf(c.q)
        }
    }

    fn prob2(&self, c: &Criterion, post1: &Mixture, post2: &Mixture) -> Result<f64> {
        let below = diff_cdf(post1, post2, c.q, self.link)?;
        Ok(if self.lower_tail { below } else { 1.0 - below })
    }

    /// `P_i - p_i` for every criterion; the decision is 1 iff all are > 0.
    pub fn margins(&self, post1: &Mixture, post2: Option<&Mixture>) -> Result<Vec<f64>> {
        match (self.arity, post2) {
            (Arity::OneSample, None) => Ok(self.criteria.iter().map(|c| self.prob1(c, post1) - c.p).collect()),
            (Arity::TwoSample, Some(p2)) => self
                .criteria
                .iter()
                .map(|c| Ok(self.prob2(c, post1, p2)? - c.p))
                .collect(),
            (Arity::OneSample, Some(_)) => Err(Error::invalid("one-sample decision given two posteriors")),
            (Arity::TwoSample, None) => Err(Error::invalid("two-sample decision needs two posteriors")),
        }
    }

    /// Margin of a single criterion.
    pub fn margin(&self, i: usize, post1: &Mixture, post2: Option<&Mixture>) -> Result<f64> {
        let c = &self.criteria[i];
        match post2 {
            None => Ok(self.prob1(c, post1) - c.p),
            Some(p2) => Ok(self.prob2(c, post1, p2)? - c.p),
        }
    }

    /// Evaluate the decision (true = success). Criteria are checked in order
    /// and evaluation stops at the first failure.
    pub fn evaluate(&self, post1: &Mixture, post2: Option<&Mixture>) -> Result<bool> {
        match (self.arity, post2) {
            (Arity::OneSample, None) => Ok(self.criteria.iter().all(|c| self.prob1(c, post1) > c.p)),
            (Arity::TwoSample, Some(p2)) => {
                self.link.check_family(&post1.family())?;
                for c in &self.criteria {
                    if self.prob2(c, post1, p2)? <= c.p {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            _ => self.margins(post1, post2).map(|_| false),
        }
    }
}

/// Evaluate `d` on the given posterior(s).
pub fn evaluate_decision(d: &DecisionFunction, post1: &Mixture, post2: Option<&Mixture>) -> Result<bool> {
    d.evaluate(post1, post2)
}
