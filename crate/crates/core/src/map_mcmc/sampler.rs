//! Adaptive Metropolis-within-Gibbs sampler for the normal random-effects
//! model on the link scale.
//!
//! State: intercept μ, log τ and one effect θ_j per study. One sweep does
//!
//! 1. a random-walk update of each θ_j,
//! 2. an exact Gibbs draw of μ given θ and τ,
//! 3. a random-walk update of log τ with θ held fixed,
//! 4. a joint rescaling of log τ and the deviations θ_j - μ,
//! 5. a joint shift of μ and all θ_j.
//!
//! Moves 4 and 5 keep the standardised effects (θ_j - μ)/τ fixed, which lets
//! the chain cross the funnel at small τ where single-site updates stall.
//! Step sizes are tuned during warmup by a Robbins-Monro recursion towards
//! an acceptance rate of 0.44 and frozen afterwards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::data::{HyperPriors, StudyLik};

const TARGET_ACCEPT: f64 = 0.44;

/// Random-walk proposal scale with running acceptance bookkeeping.
#[derive(Debug, Clone)]
struct Step {
    log_scale: f64,
    accepted: u64,
    tried: u64,
}

impl Step {
    fn new(scale: f64) -> Self {
        Step {
            log_scale: scale.ln(),
            accepted: 0,
            tried: 0,
        }
    }

    fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    fn record(&mut self, accepted: bool, adapt_gain: Option<f64>) {
        self.tried += 1;
        if accepted {
            self.accepted += 1;
        }
        if let Some(g) = adapt_gain {
            let a = if accepted { 1.0 } else { 0.0 };
            self.log_scale = (self.log_scale + g * (a - TARGET_ACCEPT)).clamp(-12.0, 4.0);
        }
    }

    fn reset_counts(&mut self) {
        self.accepted = 0;
        self.tried = 0;
    }

    fn rate(&self) -> f64 {
        if self.tried == 0 {
            0.0
        } else {
            self.accepted as f64 / self.tried as f64
        }
    }
}

/// Kept draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ChainOutput {
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    /// `theta[j][t]`
    pub theta: Vec<Vec<f64>>,
    /// Link-scale predictive draws μ + τ·z.
    pub theta_star: Vec<f64>,
    pub acceptance: Vec<(String, f64)>,
}

fn z(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn accept(rng: &mut ChaCha8Rng, log_ratio: f64) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

pub(crate) fn run_chain(
    liks: &[StudyLik],
    priors: &HyperPriors,
    warmup: usize,
    iter: usize,
    rng: &mut ChaCha8Rng,
) -> ChainOutput {
    let j_n = liks.len();
    let jf = j_n as f64;
    let ln_tau_prior = |lt: f64| priors.tau.ln_pdf(lt.exp()) + lt;

    // Overdispersed start: hyperparameters from their priors, effects at
    // jittered empirical estimates.
    let mut mu = priors.mu_mean + priors.mu_sd * z(rng);
    let mut tau = priors.tau.sample(rng).max(1e-3);
    let mut lt = tau.ln();
    let mut theta: Vec<f64> = liks.iter().map(|l| l.empirical() + 0.1 * z(rng)).collect();
    let mut lik: Vec<f64> = liks.iter().zip(&theta).map(|(l, t)| l.ln_lik(*t)).collect();

    let mut th_step: Vec<Step> = (0..j_n).map(|_| Step::new(0.5)).collect();
    let mut tau_step = Step::new(0.5);
    let mut scale_step = Step::new(0.3);
    let mut shift_step = Step::new(0.3);

    let mut out = ChainOutput {
        mu: Vec::with_capacity(iter),
        tau: Vec::with_capacity(iter),
        theta: vec![Vec::with_capacity(iter); j_n],
        theta_star: Vec::with_capacity(iter),
        acceptance: Vec::new(),
    };

    let mu_prec0 = 1.0 / (priors.mu_sd * priors.mu_sd);
    for t in 0..warmup + iter {
        let gain = (t < warmup).then(|| 1.0 / ((t + 1) as f64).powf(0.6));
        if t == warmup {
            for s in th_step
                .iter_mut()
                .chain([&mut tau_step, &mut scale_step, &mut shift_step])
            {
                s.reset_counts();
            }
        }

        // 1. effects
        for j in 0..j_n {
            let prop = theta[j] + th_step[j].scale() * z(rng);
            let new_lik = liks[j].ln_lik(prop);
            let inv2 = 0.5 / (tau * tau);
            let lr = new_lik - lik[j] - inv2 * ((prop - mu).powi(2) - (theta[j] - mu).powi(2));
            let ok = accept(rng, lr);
            if ok {
                theta[j] = prop;
                lik[j] = new_lik;
            }
            th_step[j].record(ok, gain);
        }

        // 2. intercept, conjugate given θ and τ
        let prec = jf / (tau * tau) + mu_prec0;
        let mean = (theta.iter().sum::<f64>() / (tau * tau) + priors.mu_mean * mu_prec0) / prec;
        mu = mean + z(rng) / prec.sqrt();

        // 3. log τ with θ fixed
        let ss: f64 = theta.iter().map(|t| (t - mu).powi(2)).sum();
        let cond = |lt: f64| -jf * lt - 0.5 * ss * (-2.0 * lt).exp() + ln_tau_prior(lt);
        let prop = lt + tau_step.scale() * z(rng);
        let ok = accept(rng, cond(prop) - cond(lt));
        if ok {
            lt = prop;
            tau = lt.exp();
        }
        tau_step.record(ok, gain);

        // 4. rescale deviations together with τ; the effect prior and the
        // Jacobian cancel, leaving likelihood and τ prior terms
        let prop_lt = lt + scale_step.scale() * z(rng);
        let factor = (prop_lt - lt).exp();
        let prop_theta: Vec<f64> = theta.iter().map(|t| mu + (t - mu) * factor).collect();
        let prop_lik: Vec<f64> = liks.iter().zip(&prop_theta).map(|(l, t)| l.ln_lik(*t)).collect();
        let lr = prop_lik.iter().sum::<f64>() - lik.iter().sum::<f64>() + ln_tau_prior(prop_lt) - ln_tau_prior(lt);
        let ok = accept(rng, lr);
        if ok {
            lt = prop_lt;
            tau = lt.exp();
            theta = prop_theta;
            lik = prop_lik;
        }
        scale_step.record(ok, gain);

        // 5. shift μ and all effects together
        let delta = shift_step.scale() * z(rng);
        let prop_lik: Vec<f64> = liks.iter().zip(&theta).map(|(l, t)| l.ln_lik(t + delta)).collect();
        let mu_prior = |m: f64| -0.5 * (m - priors.mu_mean).powi(2) * mu_prec0;
        let lr = prop_lik.iter().sum::<f64>() - lik.iter().sum::<f64>() + mu_prior(mu + delta) - mu_prior(mu);
        let ok = accept(rng, lr);
        if ok {
            mu += delta;
            for t in theta.iter_mut() {
                *t += delta;
            }
            lik = prop_lik;
        }
        shift_step.record(ok, gain);

        if t >= warmup {
            out.mu.push(mu);
            out.tau.push(tau);
            for (col, th) in out.theta.iter_mut().zip(&theta) {
                col.push(*th);
            }
            out.theta_star.push(mu + tau * z(rng));
        }
    }

    let mut acc: Vec<(String, f64)> = th_step
        .iter()
        .enumerate()
        .map(|(j, s)| (format!("theta[{}]", j + 1), s.rate()))
        .collect();
    acc.push(("log_tau".into(), tau_step.rate()));
    acc.push(("scale".into(), scale_step.rate()));
    acc.push(("shift".into(), shift_step.rate()));
    out.acceptance = acc;
    out
}
