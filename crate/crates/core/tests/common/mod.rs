//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use mapprior::map_mcmc::StudyDataset;
use mapprior::Mixture;

/// Historical control data of eight ankylosing spondylitis studies:
/// (id, responders, patients).
pub const AS_STUDIES: [(&str, u64, u64); 8] = [
    ("1", 23, 107),
    ("2", 12, 44),
    ("3", 19, 51),
    ("4", 9, 39),
    ("5", 39, 139),
    ("6", 6, 20),
    ("7", 9, 78),
    ("8", 10, 35),
];

pub fn as_data() -> StudyDataset {
    StudyDataset::binomial(&AS_STUDIES).unwrap()
}

/// Reference four-component beta approximation of the AS MAP prior.
pub fn as_map_mixture() -> Mixture {
    Mixture::beta(&[
        (0.4652656, 31.0317022, 96.5540272),
        (0.2038402, 21.3507421, 42.9105627),
        (0.1955961, 10.2829720, 45.1537087),
        (0.1352982, 2.2980848, 5.0607874),
    ])
    .unwrap()
}

/// Treatment-arm prior of the AS design.
pub fn as_treatment_prior() -> Mixture {
    Mixture::beta(&[(1.0, 0.5, 1.0)]).unwrap()
}

/// Binomial pmf written out independently of the crate.
pub fn binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let (k, n) = (k as f64, n as f64);
    (ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0) + k * p.ln() + (n - k) * (1.0 - p).ln()).exp()
}

/// Composite 10-point Gauss-Legendre rule over `[a, b]` split into `panels`.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.148_874_338_981_631_2,
        0.433_395_394_129_247_2,
        0.679_409_568_299_024_4,
        0.865_063_366_688_984_5,
        0.973_906_528_517_171_7,
    ];
    const W: [f64; 5] = [
        0.295_524_224_714_752_9,
        0.269_266_719_309_996_4,
        0.219_086_362_515_982_0,
        0.149_451_349_150_580_6,
        0.066_671_344_308_688_1,
    ];
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let mid = a + (i as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in X.iter().zip(W) {
            total += w * half * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total
}
