mod common;

use mapprior::mixture::{diff_cdf, diff_quantile, diff_sample, vague_component};
use mapprior::{Family, GammaLikelihood, Link, Mixture};
use proptest::prelude::*;

fn beta_mixture() -> impl Strategy<Value = Mixture> {
    prop::collection::vec((0.05f64..1.0, 0.3f64..30.0, 0.3f64..30.0), 1..4).prop_map(|c| Mixture::beta(&c).unwrap())
}

fn normal_mixture() -> impl Strategy<Value = Mixture> {
    (
        0.2f64..5.0,
        prop::collection::vec((0.05f64..1.0, -5.0f64..5.0, 0.05f64..3.0), 1..4),
    )
        .prop_map(|(s, c)| Mixture::normal(s, &c).unwrap())
}

fn gamma_mixture() -> impl Strategy<Value = Mixture> {
    prop::collection::vec((0.05f64..1.0, 0.5f64..20.0, 0.2f64..5.0), 1..4)
        .prop_map(|c| Mixture::gamma(GammaLikelihood::Poisson, &c).unwrap())
}

fn any_mixture() -> impl Strategy<Value = Mixture> {
    prop_oneof![beta_mixture(), normal_mixture(), gamma_mixture()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_normalised(m in any_mixture()) {
        let total: f64 = m.components().iter().map(|c| c.w).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf(m in any_mixture(), p in 0.001f64..0.999) {
        let x = m.quantile(p).unwrap();
        prop_assert!((m.cdf(x) - p).abs() < 1e-8, "cdf(q({p})) = {}", m.cdf(x));
    }

    #[test]
    fn cdf_is_monotone(m in any_mixture(), p1 in 0.001f64..0.999, p2 in 0.001f64..0.999) {
        let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
        let (a, b) = (m.quantile(lo).unwrap(), m.quantile(hi).unwrap());
        prop_assert!(a <= b);
        prop_assert!(m.cdf(a) <= m.cdf(b) + 1e-15);
        prop_assert!((m.cdf(a) + m.sf(a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn robustify_is_a_pointwise_mixture(m in beta_mixture(), w in 0.01f64..0.99, mean in 0.05f64..0.95, x in 0.01f64..0.99) {
        let r = m.robustify(w, mean, 1.0).unwrap();
        let v = vague_component(Family::Beta, mean, 1.0).unwrap();
        prop_assert_eq!(r.len(), m.len() + 1);
        let direct = (1.0 - w) * m.density(x) + w * v.density(x);
        prop_assert!((r.density(x) - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn json_round_trip(m in any_mixture()) {
        let s = serde_json::to_string(&m).unwrap();
        let back: Mixture = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn difference_cdf_is_antisymmetric(a in beta_mixture(), b in beta_mixture(), d in -0.5f64..0.5) {
        // P(θ₁ - θ₂ ≤ d) + P(θ₂ - θ₁ ≤ -d) = 1 for continuous laws
        let left = diff_cdf(&a, &b, d, Link::Identity).unwrap();
        let right = diff_cdf(&b, &a, -d, Link::Identity).unwrap();
        prop_assert!((left + right - 1.0).abs() < 1e-8, "{left} + {right}");
    }
}

#[test]
fn density_integrates_to_one() {
    let mixes = [
        common::as_map_mixture(),
        Mixture::beta(&[(0.5, 0.5, 0.7), (0.5, 3.0, 1.0)]).unwrap(),
        Mixture::gamma(GammaLikelihood::Exponential, &[(1.0, 3.0, 2.0)]).unwrap(),
        Mixture::normal(2.0, &[(0.3, -1.0, 0.2), (0.7, 4.0, 3.0)]).unwrap(),
    ];
    // the upper end stays where 1 - x is still representable for b < 1
    let ladder = [
        1e-12,
        1e-10,
        1e-8,
        1e-6,
        1e-4,
        1e-2,
        0.1,
        0.5,
        0.9,
        0.99,
        1.0 - 1e-3,
        1.0 - 1e-4,
        1.0 - 1e-5,
        1.0 - 1e-6,
    ];
    for m in &mixes {
        let cuts: Vec<f64> = ladder.iter().map(|p| m.quantile(*p).unwrap()).collect();
        let total: f64 = cuts
            .windows(2)
            .map(|w| common::gauss_legendre(|x| m.density(x), w[0], w[1], 2000))
            .sum();
        let expected = ladder[ladder.len() - 1] - ladder[0];
        assert!((total - expected).abs() < 1e-8, "{m:?}: {total}");
    }
}

#[test]
fn moments_match_sampling() {
    let m = common::as_map_mixture();
    let xs = m.sample(200_000, 3);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!((mean - m.mean()).abs() < 4.0 * m.sd() / (xs.len() as f64).sqrt());
    assert!((var / m.variance() - 1.0).abs() < 0.02);
}

#[test]
fn normal_difference_is_exact() {
    let a = Mixture::normal(1.0, &[(1.0, 1.0, 0.6)]).unwrap();
    let b = Mixture::normal(1.0, &[(1.0, 0.2, 0.8)]).unwrap();
    // θ₁ - θ₂ ~ Normal(0.8, 1.0)
    let q = diff_quantile(&a, &b, 0.975, Link::Identity).unwrap();
    assert!((q - (0.8 + 1.959963984540054)).abs() < 1e-8);
}

#[test]
fn logit_difference_agrees_with_simulation() {
    let a = Mixture::beta(&[(0.6, 4.0, 6.0), (0.4, 1.0, 1.0)]).unwrap();
    let b = common::as_map_mixture();
    let draws = diff_sample(&a, &b, 200_000, 8, Link::Logit).unwrap();
    for d in [-1.0, 0.0, 0.7] {
        let mc = draws.iter().filter(|x| **x <= d).count() as f64 / draws.len() as f64;
        let exact = diff_cdf(&a, &b, d, Link::Logit).unwrap();
        let se = (exact * (1.0 - exact) / draws.len() as f64).sqrt();
        assert!((mc - exact).abs() < 4.0 * se, "d={d}: {mc} vs {exact}");
    }
}
