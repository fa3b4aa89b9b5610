//! Convergence diagnostics.

use serde::{Deserialize, Serialize};

/// Split-R̂: each chain is cut in half and the potential scale reduction is
/// computed over the halves.
///
/// Returns `None` when the statistic is undefined: fewer than four draws per
/// chain, zero within-chain variance, or chains that are exact copies of each
/// other (which happens when every chain was started from the same seed).
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    if chains.is_empty() {
        return None;
    }
    let n = chains.iter().map(|c| c.len()).min()?;
    if n < 4 {
        return None;
    }
    if chains.len() > 1 && chains.iter().skip(1).all(|c| c[..n] == chains[0][..n]) {
        return None;
    }
    let half = n / 2;
    let parts: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[n - half..n]]).collect();
    let m = parts.len() as f64;
    let len = half as f64;
    let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / len).collect();
    let vars: Vec<f64> = parts
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (len - 1.0))
        .collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = len * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let w = vars.iter().sum::<f64>() / m;
    if !(w > 0.0) {
        return None;
    }
    let var_plus = (len - 1.0) / len * w + b / len;
    Some((var_plus / w).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostic {
    pub name: String,
    /// `None` when undefined.
    pub rhat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub params: Vec<ParamDiagnostic>,
    /// Largest defined R̂; `None` if no parameter has one.
    pub max_rhat: Option<f64>,
    /// Per chain, post-warmup acceptance rate of each Metropolis move.
    pub acceptance: Vec<Vec<(String, f64)>>,
    /// Set when the run should not be trusted as is.
    pub warning: bool,
    pub messages: Vec<String>,
}

/// Threshold above which R̂ raises the warning flag.
pub const RHAT_WARN: f64 = 1.1;
/// Runs with fewer kept draws per chain are flagged as too short.
pub const MIN_KEPT_DRAWS: usize = 100;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn draws(seed: u64, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2000)
            .map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect()
    }

    #[test]
    fn well_mixed_chains_are_near_one() {
        let c: Vec<Vec<f64>> = (0..4).map(|s| draws(s, 0.0)).collect();
        let refs: Vec<&[f64]> = c.iter().map(Vec::as_slice).collect();
        let r = split_rhat(&refs).unwrap();
        assert!((r - 1.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn shifted_chain_is_detected() {
        let mut c: Vec<Vec<f64>> = (0..3).map(|s| draws(s, 0.0)).collect();
        c.push(draws(9, 3.0));
        let refs: Vec<&[f64]> = c.iter().map(Vec::as_slice).collect();
        assert!(split_rhat(&refs).unwrap() > 1.1);
    }

    #[test]
    fn identical_chains_are_undefined() {
        let c = draws(1, 0.0);
        assert_eq!(split_rhat(&[&c, &c, &c, &c]), None);
        assert_eq!(split_rhat(&[&[1.0; 10][..], &[1.0; 10][..]]), None);
    }
}
