//! Expectation-maximisation fits of conjugate mixtures to a sample.
//!
//! The usual input is an MCMC sample of a MAP prior on the response scale.
//! Beta and gamma fits start from 1-D k-means clusters; normal fits start
//! from a Student-t mixture fitted to the same clusters. [`auto_fit`] tries
//! one to `k_max` components and keeps the fit with the lowest AIC.

mod init;
mod mstep;

pub use init::{knn_init, student_t_fit, Cluster, STUDENT_T_DF};
pub use mstep::{beta_mstep, gamma_mstep};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Family, Mixture};
use crate::numerics::special::{ln_beta, ln_gamma, log_sum_exp};

/// Beta samples are clamped into `[BETA_CLAMP, 1 - BETA_CLAMP]`.
pub const BETA_CLAMP: f64 = 1e-8;

/// Validated sample for a given family.
#[derive(Debug, Clone, PartialEq)]
pub struct EmSample {
    values: Vec<f64>,
    clamped: usize,
}

impl EmSample {
    pub fn new(values: Vec<f64>, family: Family) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty sample"));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("sample contains non-finite value {x}")));
        }
        let mut clamped = 0;
        let values = match family {
            Family::Normal { .. } => values,
            Family::Beta => {
                if let Some(x) = values.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                    return Err(Error::OutOfSupport {
                        value: *x,
                        support: "[0, 1]".into(),
                    });
                }
                values
                    .into_iter()
                    .map(|x| {
                        let c = x.clamp(BETA_CLAMP, 1.0 - BETA_CLAMP);
                        if c != x {
                            clamped += 1;
                        }
                        c
                    })
                    .collect()
            }
            Family::Gamma { .. } => {
                if let Some(x) = values.iter().find(|x| **x <= 0.0) {
                    return Err(Error::OutOfSupport {
                        value: *x,
                        support: "(0, inf)".into(),
                    });
                }
                values
            }
        };
        Ok(EmSample { values, clamped })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of beta values moved onto the clamp boundary.
    pub fn clamped(&self) -> usize {
        self.clamped
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Absolute log-likelihood change that counts as flat.
    pub abs_tol: f64,
    /// Number of consecutive flat iterations that ends the fit.
    pub patience: usize,
    /// Relative log-likelihood change that ends the fit at once.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iter: 1000,
            abs_tol: 1e-6,
            patience: 10,
            rel_tol: 1e-9,
            seed: 1,
        }
    }
}

impl EmOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFitResult {
    pub mixture: Mixture,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Responsibility totals `N_k` per component.
    pub n_k: Vec<f64>,
    pub aic: f64,
    /// Components removed after collapsing.
    pub pruned: usize,
    /// Beta values clamped away from 0 and 1.
    pub clamped: usize,
    /// Log-likelihood after each E-step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

/// Akaike information criterion with `3K - 1` free parameters.
pub fn aic(k: usize, loglik: f64) -> f64 {
    2.0 * (3 * k - 1) as f64 - 2.0 * loglik
}

/// Per-family log-density evaluator with the log-transforms of the sample
/// computed once.
struct Evaluator<'a> {
    family: Family,
    y: &'a [f64],
    ln_y: Vec<f64>,
    ln_1my: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(family: Family, y: &'a [f64]) -> Self {
        let ln_y = match family {
            Family::Normal { .. } => Vec::new(),
            _ => y.iter().map(|v| v.ln()).collect(),
        };
        let ln_1my = match family {
            Family::Beta => y.iter().map(|v| (-v).ln_1p()).collect(),
            _ => Vec::new(),
        };
        Evaluator {
            family,
            y,
            ln_y,
            ln_1my,
        }
    }

    /// Fill `out[i*k + j]` with `ln w_j + ln p_j(y_i)`.
    fn joint(&self, comps: &[(f64, f64, f64)], out: &mut [f64]) {
        let k = comps.len();
        for (j, &(w, a, b)) in comps.iter().enumerate() {
            let lw = w.ln();
            match self.family {
                Family::Normal { .. } => {
                    let c = lw - b.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
                    for (i, y) in self.y.iter().enumerate() {
                        let z = (y - a) / b;
                        out[i * k + j] = c - 0.5 * z * z;
                    }
                }
                Family::Beta => {
                    let c = lw - ln_beta(a, b);
                    for i in 0..self.y.len() {
                        out[i * k + j] = c + (a - 1.0) * self.ln_y[i] + (b - 1.0) * self.ln_1my[i];
                    }
                }
                Family::Gamma { .. } => {
                    let c = lw + a * b.ln() - ln_gamma(a);
                    for (i, y) in self.y.iter().enumerate() {
                        out[i * k + j] = c + (a - 1.0) * self.ln_y[i] - b * y;
                    }
                }
            }
        }
    }

    /// E-step: turn joint log terms into responsibilities in place and
    /// return the log-likelihood.
    fn e_step(&self, comps: &[(f64, f64, f64)], buf: &mut [f64]) -> f64 {
        self.joint(comps, buf);
        let k = comps.len();
        let mut ll = 0.0;
        for row in buf.chunks_mut(k) {
            let l = log_sum_exp(row);
            ll += l;
            for g in row.iter_mut() {
                *g = (*g - l).exp();
            }
        }
        ll
    }
}

/// log p(Y) = Σ_i log Σ_k w_k p_k(y_i).
pub fn loglik(mix: &Mixture, values: &[f64]) -> f64 {
    let comps: Vec<(f64, f64, f64)> = mix.components().iter().map(|c| (c.w, c.a, c.b)).collect();
    let ev = Evaluator::new(mix.family(), values);
    let mut buf = vec![0.0; values.len() * comps.len()];
    ev.joint(&comps, &mut buf);
    buf.chunks(comps.len()).map(log_sum_exp).sum()
}

/// Posterior membership probabilities γ(Z_ik), one row per value.
pub fn responsibilities(mix: &Mixture, values: &[f64]) -> Vec<Vec<f64>> {
    let comps: Vec<(f64, f64, f64)> = mix.components().iter().map(|c| (c.w, c.a, c.b)).collect();
    let ev = Evaluator::new(mix.family(), values);
    let mut buf = vec![0.0; values.len() * comps.len()];
    ev.e_step(&comps, &mut buf);
    buf.chunks(comps.len()).map(<[f64]>::to_vec).collect()
}

fn cluster_params(family: Family, c: &Cluster) -> (f64, f64) {
    match family {
        Family::Normal { .. } => (c.mean, c.var.sqrt()),
        Family::Beta => {
            let m = c.mean.clamp(1e-6, 1.0 - 1e-6);
            let v = c.var.min(0.99 * m * (1.0 - m)).max(1e-12);
            let n = m * (1.0 - m) / v - 1.0;
            (m * n, (1.0 - m) * n)
        }
        Family::Gamma { .. } => {
            let m = c.mean.max(1e-12);
            (m * m / c.var, m / c.var)
        }
    }
}

/// Fit a `k`-component mixture by EM.
///
/// A component whose weight drops below 1e-8 or whose variance drops below
/// 1e-12 is pruned and the fit restarts with one component fewer.
pub fn em_fit(sample: &EmSample, family: Family, k: usize, opts: EmOptions) -> Result<EmFitResult> {
    let y = sample.values();
    if k == 0 {
        return Err(Error::invalid("number of components must be >= 1"));
    }
    if y.len() < 10 * k {
        return Err(Error::invalid(format!(
            "{} values are too few for {k} components (need at least {})",
            y.len(),
            10 * k
        )));
    }
    let clusters = knn_init(y, k, opts.seed)?;
    let start = match family {
        Family::Normal { .. } => student_t_fit(y, &clusters, 200),
        _ => clusters,
    };
    let comps: Vec<(f64, f64, f64)> = start
        .iter()
        .map(|c| {
            let (a, b) = cluster_params(family, c);
            (c.weight, a, b)
        })
        .collect();
    match run_em(y, family, comps, opts)? {
        Ok(mut fit) => {
            fit.clamped = sample.clamped();
            Ok(fit)
        }
        Err(collapsed) => {
            log::warn!(
                "EM component {collapsed} of {k} collapsed; refitting with {} components",
                k - 1
            );
            if k == 1 {
                return Err(Error::Degenerate("single-component fit collapsed".into()));
            }
            let mut fit = em_fit(sample, family, k - 1, opts)?;
            fit.pruned += 1;
            Ok(fit)
        }
    }
}

fn kernel_var(family: Family, a: f64, b: f64) -> f64 {
    family.kernel(a, b).variance()
}

/// Core EM loop. The outer `Err` is a numerical failure; the inner `Err`
/// names a collapsed component.
fn run_em(
    y: &[f64],
    family: Family,
    mut comps: Vec<(f64, f64, f64)>,
    opts: EmOptions,
) -> Result<std::result::Result<EmFitResult, usize>> {
    let k = comps.len();
    let n = y.len();
    let ev = Evaluator::new(family, y);
    let mut buf = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut flat = 0;
    let mut converged = false;
    let mut n_k = vec![0.0; k];
    let mut iterations = 0;
    let mut ll = f64::NEG_INFINITY;
    for it in 0..opts.max_iter {
        let new_ll = ev.e_step(&comps, &mut buf);
        if !new_ll.is_finite() {
            return Err(Error::numerical(format!("EM log-likelihood became {new_ll}")));
        }
        trace.push(new_ll);
        iterations = it + 1;
        if it > 0 {
            let d = new_ll - ll;
            flat = if d.abs() < opts.abs_tol { flat + 1 } else { 0 };
            if flat >= opts.patience || d.abs() < opts.rel_tol * new_ll.abs() {
                ll = new_ll;
                converged = true;
                break;
            }
        }
        ll = new_ll;

        // M-step
        for j in 0..k {
            let mut nk = 0.0;
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in 0..n {
                let g = buf[i * k + j];
                nk += g;
                match family {
                    Family::Normal { .. } => s1 += g * y[i],
                    Family::Beta => {
                        s1 += g * ev.ln_y[i];
                        s2 += g * ev.ln_1my[i];
                    }
                    Family::Gamma { .. } => {
                        s1 += g * y[i];
                        s2 += g * ev.ln_y[i];
                    }
                }
            }
            n_k[j] = nk;
            let w = nk / n as f64;
            if w < 1e-8 {
                return Ok(Err(j));
            }
            let (a_old, b_old) = (comps[j].1, comps[j].2);
            let (a, b) = match family {
                Family::Normal { .. } => {
                    let m = s1 / nk;
                    let v: f64 = (0..n).map(|i| buf[i * k + j] * (y[i] - m).powi(2)).sum::<f64>() / nk;
                    if v < 1e-12 {
                        return Ok(Err(j));
                    }
                    (m, v.sqrt())
                }
                Family::Beta => match beta_mstep(s1 / nk, s2 / nk, (a_old, b_old)) {
                    Ok(p) => p,
                    Err(Error::Degenerate(_)) => return Ok(Err(j)),
                    Err(e) => return Err(e),
                },
                Family::Gamma { .. } => match gamma_mstep(s1 / nk, s2 / nk) {
                    Ok(p) => p,
                    Err(Error::Degenerate(_)) => return Ok(Err(j)),
                    Err(e) => return Err(e),
                },
            };
            if kernel_var(family, a, b) < 1e-12 {
                return Ok(Err(j));
            }
            comps[j] = (w, a, b);
        }
    }
    if !converged {
        log::warn!("EM stopped after {} iterations without converging", opts.max_iter);
        // refresh so that loglik and n_k describe the returned parameters
        ll = ev.e_step(&comps, &mut buf);
        trace.push(ll);
    }
    for (j, nk) in n_k.iter_mut().enumerate() {
        *nk = (0..n).map(|i| buf[i * k + j]).sum();
    }
    let mixture = Mixture::new(family, &comps)?;
    Ok(Ok(EmFitResult {
        aic: aic(k, ll),
        mixture,
        loglik: ll,
        iterations,
        converged,
        n_k,
        pruned: 0,
        clamped: 0,
        trace,
    }))
}

/// Fit 1..=`k_max` components concurrently and keep the lowest AIC, ties
/// going to fewer components. Component counts that cannot be fitted (for
/// example too few distinct values) are skipped; the first error is
/// returned if none succeeds.
pub fn auto_fit(sample: &EmSample, family: Family, k_max: usize, opts: EmOptions) -> Result<EmFitResult> {
    if k_max == 0 {
        return Err(Error::invalid("k_max must be >= 1"));
    }
    let results: Vec<Result<EmFitResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = (1..=k_max)
            .map(|k| {
                let o = opts.with_seed(opts.seed.wrapping_add(k as u64));
                s.spawn(move || em_fit(sample, family, k, o))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::numerical("EM worker panicked"))))
            .collect()
    });
    let mut best: Option<EmFitResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(fit) => {
                let better = match &best {
                    None => true,
                    Some(b) => fit.aic < b.aic || (fit.aic == b.aic && fit.mixture.len() < b.mixture.len()),
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => {
                log::debug!("auto_fit candidate failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::numerical("no EM fit succeeded")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::GammaLikelihood;

    #[test]
    fn loglik_of_single_component_is_sum_of_log_densities() {
        let mix = Mixture::beta(&[(1.0, 2.0, 5.0)]).unwrap();
        let ys = [0.1, 0.25, 0.6];
        let direct: f64 = ys.iter().map(|y| mix.kernel(0).ln_pdf(*y)).sum();
        assert!((loglik(&mix, &ys) - direct).abs() < 1e-12);
    }

    #[test]
    fn beta_recovery() {
        let truth = Mixture::beta(&[(1.0, 4.0, 8.0)]).unwrap();
        let s = EmSample::new(truth.sample(10_000, 42), Family::Beta).unwrap();
        let fit = em_fit(&s, Family::Beta, 1, EmOptions::default()).unwrap();
        let c = fit.mixture.components()[0];
        assert!((c.a / 4.0 - 1.0).abs() < 0.1 && (c.b / 8.0 - 1.0).abs() < 0.1, "{c:?}");
        assert!(fit.converged);
    }

    #[test]
    fn gamma_two_component_fit_is_monotone() {
        let truth = Mixture::gamma(GammaLikelihood::Poisson, &[(0.5, 2.0, 4.0), (0.5, 40.0, 4.0)]).unwrap();
        let fam = truth.family();
        let s = EmSample::new(truth.sample(5000, 7), fam).unwrap();
        let fit = em_fit(&s, fam, 2, EmOptions::default()).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8);
        }
        let total: f64 = fit.n_k.iter().sum();
        assert!((total - 5000.0).abs() < 1e-6);
    }

    #[test]
    fn too_small_sample_is_rejected() {
        let s = EmSample::new(vec![0.2, 0.3, 0.4], Family::Beta).unwrap();
        assert!(em_fit(&s, Family::Beta, 1, EmOptions::default()).is_err());
    }

    #[test]
    fn beta_values_on_the_boundary_are_clamped() {
        let s = EmSample::new(vec![0.0, 0.5, 1.0], Family::Beta).unwrap();
        assert_eq!(s.clamped(), 2);
        assert!(EmSample::new(vec![1.5], Family::Beta).is_err());
    }
}
