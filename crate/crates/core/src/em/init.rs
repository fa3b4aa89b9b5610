//! Starting values for EM: 1-D k-means with k-means++ seeding, and a
//! Student-t mixture pre-fit used to start normal mixtures away from
//! outlier-driven optima.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::special::{ln_gamma, log_sum_exp};

/// A cluster summarised by its share of the sample and its first two moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v)
}

/// Partition `values` into `k` clusters.
///
/// Centres are seeded by k-means++ and refined by Lloyd iterations. Each
/// cluster's variance is floored at a small fraction of the overall variance
/// so that singleton clusters still yield usable starting densities.
pub fn knn_init(values: &[f64], k: usize, seed: u64) -> Result<Vec<Cluster>> {
    if k == 0 {
        return Err(Error::invalid("number of clusters must be >= 1"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k.max(2) {
        return Err(Error::Degenerate(format!(
            "{} distinct values cannot support {k} cluster(s)",
            distinct.len()
        )));
    }
    let (_, total_var) = moments(&sorted);
    let floor = 1e-4 * total_var;
    if k == 1 {
        let (m, v) = moments(&sorted);
        return Ok(vec![Cluster {
            weight: 1.0,
            mean: m,
            var: v,
        }]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres = vec![sorted[rng.random_range(0..sorted.len())]];
    let mut d2: Vec<f64> = sorted.iter().map(|x| (x - centres[0]).powi(2)).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = sorted.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if u < *d {
                pick = i;
                break;
            }
            u -= d;
        }
        let c = sorted[pick];
        centres.push(c);
        for (d, x) in d2.iter_mut().zip(&sorted) {
            *d = d.min((x - c).powi(2));
        }
    }

    // Lloyd iterations. In one dimension the clusters of sorted data are
    // contiguous, so assignment reduces to finding cut points.
    let mut assign = vec![0usize; sorted.len()];
    for _ in 0..200 {
        centres.sort_by(f64::total_cmp);
        let mut changed = false;
        for (i, x) in sorted.iter().enumerate() {
            let best = centres
                .iter()
                .enumerate()
                .min_by(|a, b| (x - a.1).abs().total_cmp(&(x - b.1).abs()))
                .map(|(j, _)| j)
                .unwrap_or(0);
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![(0.0, 0usize); k];
        for (i, x) in sorted.iter().enumerate() {
            sums[assign[i]].0 += x;
            sums[assign[i]].1 += 1;
        }
        for (c, (s, n)) in centres.iter_mut().zip(&sums) {
            if *n > 0 {
                *c = s / *n as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let n = sorted.len() as f64;
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<f64> = sorted
            .iter()
            .zip(&assign)
            .filter(|(_, a)| **a == j)
            .map(|(x, _)| *x)
            .collect();
        if members.is_empty() {
            // an empty cluster keeps its centre with a token weight
            out.push(Cluster {
                weight: 1.0 / n,
                mean: centres[j],
                var: floor.max(f64::MIN_POSITIVE),
            });
            continue;
        }
        let (m, v) = moments(&members);
        out.push(Cluster {
            weight: members.len() as f64 / n,
            mean: m,
            var: v.max(floor),
        });
    }
    let wsum: f64 = out.iter().map(|c| c.weight).sum();
    for c in &mut out {
        c.weight /= wsum;
    }
    Ok(out)
}

/// Degrees of freedom of the Student-t pre-fit.
pub const STUDENT_T_DF: f64 = 4.0;

/// Fit a `k`-component Student-t mixture with fixed ν by EM, starting from
/// `init`. Returns location/scale clusters (`var` is the squared scale).
pub fn student_t_fit(values: &[f64], init: &[Cluster], max_iter: usize) -> Vec<Cluster> {
    let nu = STUDENT_T_DF;
    let k = init.len();
    let n = values.len();
    let mut w: Vec<f64> = init.iter().map(|c| c.weight).collect();
    let mut mu: Vec<f64> = init.iter().map(|c| c.mean).collect();
    let mut s2: Vec<f64> = init.iter().map(|c| c.var).collect();
    let floor = 1e-10 * s2.iter().copied().fold(0.0, f64::max).max(1e-300);
    let lnc = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    let mut prev = f64::NEG_INFINITY;
    let mut lp = vec![0.0; k];
    let mut gamma = vec![0.0; n * k];
    let mut u = vec![0.0; n * k];
    for _ in 0..max_iter {
        let mut ll = 0.0;
        for (i, &y) in values.iter().enumerate() {
            for j in 0..k {
                let d2 = (y - mu[j]).powi(2) / s2[j];
                lp[j] = w[j].ln() + lnc - 0.5 * s2[j].ln() - 0.5 * (nu + 1.0) * (d2 / nu).ln_1p();
                u[i * k + j] = (nu + 1.0) / (nu + d2);
            }
            let l = log_sum_exp(&lp);
            ll += l;
            for j in 0..k {
                gamma[i * k + j] = (lp[j] - l).exp();
            }
        }
        for j in 0..k {
            let (mut g, mut gu, mut guy) = (0.0, 0.0, 0.0);
            for (i, &y) in values.iter().enumerate() {
                let gij = gamma[i * k + j];
                g += gij;
                gu += gij * u[i * k + j];
                guy += gij * u[i * k + j] * y;
            }
            if g <= 0.0 || gu <= 0.0 {
                continue;
            }
            w[j] = g / n as f64;
            mu[j] = guy / gu;
            let ss: f64 = values
                .iter()
                .enumerate()
                .map(|(i, &y)| gamma[i * k + j] * u[i * k + j] * (y - mu[j]).powi(2))
                .sum();
            s2[j] = (ss / g).max(floor);
        }
        if (ll - prev).abs() < 1e-8 * (1.0 + ll.abs()) {
            break;
        }
        prev = ll;
    }
    (0..k)
        .map(|j| Cluster {
            weight: w[j],
            mean: mu[j],
            var: s2[j],
        })
        .collect()
}
