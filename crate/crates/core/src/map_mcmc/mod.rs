//! Meta-analytic-predictive (MAP) prior by MCMC.
//!
//! Historical study effects are modelled on the link scale as
//! `θ_j ~ Normal(μ, τ²)` with a normal prior on μ and a choice of priors on
//! τ. The MAP prior is the posterior predictive of the effect `θ⋆` of a new
//! study, sampled as `μ + τ·z` for every kept draw and mapped back to the
//! response scale.

mod data;
mod diagnostics;
mod sampler;

pub use data::{HyperPriors, Study, StudyDataset, TauPrior};
pub use diagnostics::{split_rhat, Diagnostics, ParamDiagnostic, MIN_KEPT_DRAWS, RHAT_WARN};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::em::EmSample;
use crate::error::{Error, Result};
use crate::mixture::{Family, Link, QuantilePoint, SUMMARY_PROBS};
use data::StudyLik;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub chains: usize,
    pub warmup: usize,
    /// Kept draws per chain.
    pub iter: usize,
    pub seed: u64,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            chains: 4,
            warmup: 1000,
            iter: 1000,
            seed: 1,
        }
    }
}

/// Draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    /// One vector of draws per study.
    pub theta: Vec<Vec<f64>>,
    /// Link-scale predictive draws for a new study.
    pub theta_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapAnalysis {
    pub family: Family,
    pub link: Link,
    pub study_ids: Vec<String>,
    pub priors: HyperPriors,
    pub options: MapOptions,
    pub chains: Vec<ChainDraws>,
    pub diagnostics: Diagnostics,
}

/// Mean, sd and the usual quantiles of a set of draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<QuantilePoint>,
}

impl DrawSummary {
    pub fn from_draws(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantiles = SUMMARY_PROBS
            .iter()
            .map(|&p| QuantilePoint {
                p,
                value: empirical_quantile(&sorted, p),
            })
            .collect();
        DrawSummary { mean, sd, quantiles }
    }

    pub fn quantile(&self, p: f64) -> Option<f64> {
        self.quantiles.iter().find(|q| q.p == p).map(|q| q.value)
    }
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample the MAP prior for `data` under the random-effects model.
pub fn gmap(data: &StudyDataset, family: Family, priors: HyperPriors, opts: MapOptions) -> Result<MapAnalysis> {
    priors.validate()?;
    let link = data.link_for(family)?;
    if opts.chains == 0 || opts.iter == 0 {
        return Err(Error::invalid("need at least one chain and one kept draw"));
    }
    let liks: Vec<StudyLik> = data.rows().iter().map(|r| StudyLik::new(&r.data, family)).collect();

    let outputs: Vec<sampler::ChainOutput> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..opts.chains)
            .map(|c| {
                let liks = &liks;
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                    rng.set_stream(c as u64);
                    sampler::run_chain(liks, &priors, opts.warmup, opts.iter, &mut rng)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("MCMC chain panicked"))
            .collect()
    });

    let acceptance = outputs.iter().map(|o| o.acceptance.clone()).collect();
    let chains: Vec<ChainDraws> = outputs
        .into_iter()
        .map(|o| ChainDraws {
            mu: o.mu,
            tau: o.tau,
            theta: o.theta,
            theta_star: o.theta_star,
        })
        .collect();
    let study_ids: Vec<String> = data.rows().iter().map(|r| r.id.clone()).collect();
    let diagnostics = diagnose(&chains, &study_ids, acceptance, opts);
    for m in &diagnostics.messages {
        log::warn!("{m}");
    }
    Ok(MapAnalysis {
        family,
        link,
        study_ids,
        priors,
        options: opts,
        chains,
        diagnostics,
    })
}

fn diagnose(
    chains: &[ChainDraws],
    ids: &[String],
    acceptance: Vec<Vec<(String, f64)>>,
    opts: MapOptions,
) -> Diagnostics {
    let mut params = Vec::new();
    let mut add = |name: String, pick: &dyn Fn(&ChainDraws) -> &[f64]| {
        let refs: Vec<&[f64]> = chains.iter().map(pick).collect();
        params.push(ParamDiagnostic {
            name,
            rhat: split_rhat(&refs),
        });
    };
    add("mu".into(), &|c| &c.mu);
    add("tau".into(), &|c| &c.tau);
    for (j, id) in ids.iter().enumerate() {
        add(format!("theta[{id}]"), &move |c| &c.theta[j]);
    }
    let max_rhat = params
        .iter()
        .filter_map(|p| p.rhat)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    let mut messages = Vec::new();
    if let Some(r) = max_rhat {
        if r > RHAT_WARN {
            messages.push(format!("maximal Rhat {r:.3} exceeds {RHAT_WARN}"));
        }
    }
    let undefined: Vec<&str> = params
        .iter()
        .filter(|p| p.rhat.is_none())
        .map(|p| p.name.as_str())
        .collect();
    if !undefined.is_empty() {
        messages.push(format!("Rhat undefined for {}", undefined.join(", ")));
    }
    if opts.iter < MIN_KEPT_DRAWS {
        messages.push(format!(
            "only {} kept draws per chain; at least {MIN_KEPT_DRAWS} are needed for reliable diagnostics",
            opts.iter
        ));
    }
    Diagnostics {
        params,
        max_rhat,
        acceptance,
        warning: !messages.is_empty(),
        messages,
    }
}

/// Per-study shrinkage estimate on the response scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageRow {
    pub label: String,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl MapAnalysis {
    fn pooled(&self, pick: impl Fn(&ChainDraws) -> &[f64]) -> Vec<f64> {
        self.chains.iter().flat_map(|c| pick(c).iter().copied()).collect()
    }

    /// Link-scale predictive draws, chain-major.
    pub fn theta_star_link(&self) -> Vec<f64> {
        self.pooled(|c| &c.theta_star)
    }

    /// Response-scale predictive draws, chain-major.
    pub fn theta_star(&self) -> Vec<f64> {
        self.theta_star_link()
            .into_iter()
            .map(|x| self.link.inverse(x))
            .collect()
    }

    pub fn mu(&self) -> Vec<f64> {
        self.pooled(|c| &c.mu)
    }

    pub fn tau(&self) -> Vec<f64> {
        self.pooled(|c| &c.tau)
    }

    /// Link-scale draws of study `j`.
    pub fn theta(&self, j: usize) -> Vec<f64> {
        self.pooled(|c| &c.theta[j])
    }

    pub fn theta_star_summary(&self) -> DrawSummary {
        DrawSummary::from_draws(&self.theta_star())
    }

    pub fn tau_summary(&self) -> DrawSummary {
        DrawSummary::from_draws(&self.tau())
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// Median and 95% interval of each study effect on the response scale,
    /// followed by the typical effect (inverse link of μ) and the MAP row.
    pub fn shrinkage_estimates(&self) -> Vec<ShrinkageRow> {
        let row = |label: String, draws: Vec<f64>| {
            let mut resp: Vec<f64> = draws.into_iter().map(|x| self.link.inverse(x)).collect();
            resp.sort_by(f64::total_cmp);
            ShrinkageRow {
                label,
                median: empirical_quantile(&resp, 0.5),
                lower: empirical_quantile(&resp, 0.025),
                upper: empirical_quantile(&resp, 0.975),
            }
        };
        let mut rows: Vec<ShrinkageRow> = self
            .study_ids
            .iter()
            .enumerate()
            .map(|(j, id)| row(id.clone(), self.theta(j)))
            .collect();
        rows.push(row("typical".into(), self.mu()));
        rows.push(row("MAP".into(), self.theta_star_link()));
        rows
    }

    /// The response-scale predictive draws as an EM input sample.
    pub fn map_prior_sample(&self) -> Result<EmSample> {
        EmSample::new(self.theta_star(), self.family)
    }
}
