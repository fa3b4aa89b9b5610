use mapprior::ess::{ess, ess_with, EssMethod, EssOptions};
use mapprior::{Error, GammaLikelihood, Mixture};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_beta_elir_is_a_plus_b(a in 1.01f64..60.0, b in 1.01f64..60.0) {
        let m = Mixture::beta(&[(1.0, a, b)]).unwrap();
        let e = ess(&m, EssMethod::Elir).unwrap();
        prop_assert!((e - (a + b)).abs() < 1e-6 * (a + b), "{e}");
    }

    #[test]
    fn single_gamma_poisson_elir_is_the_rate(a in 1.0f64..50.0, b in 0.1f64..20.0) {
        let m = Mixture::gamma(GammaLikelihood::Poisson, &[(1.0, a, b)]).unwrap();
        let e = ess(&m, EssMethod::Elir).unwrap();
        prop_assert!((e - b).abs() < 1e-6 * b, "{e} vs {b}");
    }

    #[test]
    fn normal_methods_agree(sigma in 0.2f64..10.0, s in 0.05f64..5.0, m in -5.0f64..5.0) {
        let mix = Mixture::normal(sigma, &[(1.0, m, s)]).unwrap();
        let target = sigma * sigma / (s * s);
        for method in [EssMethod::Elir, EssMethod::Moment] {
            let e = ess(&mix, method).unwrap();
            prop_assert!((e - target).abs() < 1e-6 * target.max(1.0));
        }
    }

    #[test]
    fn heavier_robust_weight_lowers_the_elir(w1 in 0.05f64..0.45, dw in 0.05f64..0.5) {
        let base = Mixture::beta(&[(1.0, 11.0, 32.0)]).unwrap();
        let a = base.robustify(w1, 0.5, 2.0).unwrap();
        let b = base.robustify(w1 + dw, 0.5, 2.0).unwrap();
        prop_assert!(ess(&b, EssMethod::Elir).unwrap() < ess(&a, EssMethod::Elir).unwrap());
    }
}

#[test]
fn morita_is_close_to_a_plus_b_for_a_single_beta() {
    let m = Mixture::beta(&[(1.0, 11.0, 32.0)]).unwrap();
    let e = ess(&m, EssMethod::Morita).unwrap();
    assert!((e - 43.0).abs() < 1.5, "{e}");
}

#[test]
fn divergent_elir_is_reported() {
    let m = Mixture::beta(&[(0.8, 10.0, 20.0), (0.2, 0.5, 0.5)]).unwrap();
    assert!(matches!(ess(&m, EssMethod::Elir), Err(Error::Divergent(_))));
    let opts = EssOptions {
        divergent_as_infinity: true,
        ..Default::default()
    };
    assert_eq!(ess_with(&m, EssMethod::Elir, opts).unwrap().value, f64::INFINITY);
}
