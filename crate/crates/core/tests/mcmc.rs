mod common;

use mapprior::map_mcmc::{empirical_quantile, gmap, HyperPriors, MapOptions, StudyDataset, TauPrior};
use mapprior::{Error, Family, GammaLikelihood, Link};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn long() -> MapOptions {
    MapOptions {
        iter: 5000,
        ..Default::default()
    }
}

/// Posterior means of μ and τ for normal data by direct quadrature: μ is
/// integrated analytically given τ, and τ on a fine grid.
fn normal_oracle(rows: &[(f64, f64)], mu_sd: f64, tau_sd: f64) -> (f64, f64) {
    let grid = 20_000;
    let top = 8.0 * tau_sd;
    let h = top / grid as f64;
    let (mut z, mut e_mu, mut e_tau) = (0.0, 0.0, 0.0);
    for i in 0..=grid {
        let tau = i as f64 * h;
        let v: Vec<f64> = rows.iter().map(|(_, se)| se * se + tau * tau).collect();
        let prec = 1.0 / (mu_sd * mu_sd) + v.iter().map(|v| 1.0 / v).sum::<f64>();
        let m = rows.iter().zip(&v).map(|((y, _), v)| y / v).sum::<f64>() / prec;
        let ln_marg = -0.5 * v.iter().map(|v| v.ln()).sum::<f64>() - 0.5 * prec.ln() + 0.5 * m * m * prec
            - 0.5 * rows.iter().zip(&v).map(|((y, _), v)| y * y / v).sum::<f64>()
            - 0.5 * (tau / tau_sd).powi(2);
        let wt = ln_marg.exp() * if i == 0 || i == grid { 0.5 } else { 1.0 };
        z += wt;
        e_mu += wt * m;
        e_tau += wt * tau;
    }
    (e_mu / z, e_tau / z)
}

#[test]
fn normal_hyperparameters_match_quadrature() {
    let rows = [
        (0.4, 0.3),
        (1.1, 0.25),
        (-0.2, 0.4),
        (0.8, 0.2),
        (0.3, 0.35),
        (1.5, 0.5),
    ];
    let named: Vec<(&str, f64, f64)> = rows.iter().map(|&(y, se)| ("s", y, se)).collect();
    let data = StudyDataset::normal(&named).unwrap();
    let fit = gmap(&data, Family::Normal { sigma: 1.0 }, HyperPriors::default(), long()).unwrap();
    let (mu, tau) = normal_oracle(&rows, 2.0, 1.0);
    let (mu_hat, tau_hat) = (mean(&fit.mu()), mean(&fit.tau()));
    assert!((mu_hat - mu).abs() < 0.03, "mu {mu_hat} vs {mu}");
    assert!((tau_hat - tau).abs() < 0.03, "tau {tau_hat} vs {tau}");
    assert!(fit.diagnostics.max_rhat.unwrap() < 1.05);
}

#[test]
fn uninformative_data_return_the_hyperprior() {
    let data = StudyDataset::normal(&[("a", 0.0, 1e4), ("b", 1.0, 1e4), ("c", -1.0, 1e4)]).unwrap();
    let fit = gmap(&data, Family::Normal { sigma: 1.0 }, HyperPriors::default(), long()).unwrap();
    let (mu, tau, star) = (fit.mu(), fit.tau(), fit.theta_star());
    assert!(mean(&mu).abs() < 0.15, "{}", mean(&mu));
    assert!((sd(&mu) - 2.0).abs() < 0.15, "{}", sd(&mu));
    let half_normal_mean = (2.0 / std::f64::consts::PI).sqrt();
    assert!((mean(&tau) - half_normal_mean).abs() < 0.06, "{}", mean(&tau));
    assert!((sd(&star) - 5f64.sqrt()).abs() < 0.2, "{}", sd(&star));
}

#[test]
fn binomial_runs_are_reproducible_per_seed() {
    let opts = MapOptions {
        warmup: 300,
        iter: 300,
        ..Default::default()
    };
    let data = common::as_data();
    let a = gmap(&data, Family::Beta, HyperPriors::default(), opts).unwrap();
    let b = gmap(&data, Family::Beta, HyperPriors::default(), opts).unwrap();
    let c = gmap(
        &data,
        Family::Beta,
        HyperPriors::default(),
        MapOptions { seed: 2, ..opts },
    )
    .unwrap();
    assert_eq!(a, b);
    assert_ne!(a.chains, c.chains);
    assert_eq!(a.link, Link::Logit);
    assert!(a.theta_star().iter().all(|x| *x > 0.0 && *x < 1.0));
    assert_eq!(a.shrinkage_estimates().len(), data.len() + 2);
}

#[test]
fn poisson_rates_are_positive_and_shrunk() {
    let data = StudyDataset::poisson(&[("a", 12, 10.0), ("b", 30, 20.0), ("c", 4, 8.0), ("d", 25, 15.0)]).unwrap();
    let fam = Family::Gamma {
        likelihood: GammaLikelihood::Poisson,
    };
    let fit = gmap(&data, fam, HyperPriors::default(), MapOptions::default()).unwrap();
    assert_eq!(fit.link, Link::Log);
    let rows = fit.shrinkage_estimates();
    let raw = [1.2, 1.5, 0.5, 25.0 / 15.0];
    let pooled = 71.0 / 53.0;
    for (row, r) in rows.iter().zip(raw) {
        assert!(row.lower > 0.0 && row.lower < row.median && row.median < row.upper);
        // each estimate moves from the raw rate toward the pooled rate
        assert!((row.median - pooled).abs() <= (r - pooled).abs() + 1e-9, "{row:?}");
    }
}

#[test]
fn short_runs_raise_the_warning() {
    let opts = MapOptions {
        warmup: 50,
        iter: 20,
        ..Default::default()
    };
    let fit = gmap(&common::as_data(), Family::Beta, HyperPriors::default(), opts).unwrap();
    assert!(fit.diagnostics.warning);
    assert!(fit.diagnostics.messages.iter().any(|m| m.contains("kept draws")));
}

#[test]
fn invalid_inputs_are_rejected() {
    let data = common::as_data();
    assert!(matches!(
        gmap(
            &data,
            Family::Normal { sigma: 1.0 },
            HyperPriors::default(),
            MapOptions::default()
        ),
        Err(Error::FamilyMismatch(_))
    ));
    let bad_tau = HyperPriors {
        tau: TauPrior::HalfNormal { sd: -1.0 },
        ..Default::default()
    };
    assert!(gmap(&data, Family::Beta, bad_tau, MapOptions::default()).is_err());
    let none = MapOptions {
        chains: 0,
        ..Default::default()
    };
    assert!(gmap(&data, Family::Beta, HyperPriors::default(), none).is_err());
    assert!(StudyDataset::binomial(&[("x", 5, 3)]).is_err());
}

#[test]
fn as_shrinkage_properties() {
    let data = common::as_data();
    let fit = gmap(&data, Family::Beta, HyperPriors::default(), MapOptions::default()).unwrap();
    let rows = fit.shrinkage_estimates();
    let typical = rows[data.len()].median;
    // the largest study has the narrowest interval on the link scale; on the
    // response scale study 1, which sits close to the pooled rate, is narrower
    let widths: Vec<f64> = (0..data.len())
        .map(|j| {
            let mut t = fit.theta(j);
            t.sort_by(f64::total_cmp);
            empirical_quantile(&t, 0.975) - empirical_quantile(&t, 0.025)
        })
        .collect();
    let narrowest = (0..widths.len())
        .min_by(|&i, &j| widths[i].total_cmp(&widths[j]))
        .unwrap();
    assert_eq!(narrowest, 4, "{widths:?}");
    for (row, &(_, r, n)) in rows.iter().zip(common::AS_STUDIES.iter()) {
        let raw = r as f64 / n as f64;
        let (lo, hi) = (raw.min(typical), raw.max(typical));
        assert!(
            row.median >= lo - 0.005 && row.median <= hi + 0.005,
            "{row:?} raw {raw} typical {typical}"
        );
    }
    let sample = fit.map_prior_sample().unwrap();
    assert_eq!(sample.len(), 4000);
    assert_eq!(mean(sample.values()), fit.theta_star_summary().mean);
    let link: Vec<f64> = fit.theta_star_link().iter().map(|&x| Link::Logit.inverse(x)).collect();
    assert_eq!(link, fit.theta_star());
}

#[test]
fn vanishing_heterogeneity_predicts_the_mean() {
    let data = StudyDataset::binomial(&[("only", 12, 40)]).unwrap();
    let priors = HyperPriors {
        tau: TauPrior::HalfNormal { sd: 1e-6 },
        ..Default::default()
    };
    let fit = gmap(&data, Family::Beta, priors, long()).unwrap();
    let star = fit.theta_star_link();
    let mu = fit.mu();
    assert!((mean(&star) - mean(&mu)).abs() < 1e-4);
    assert!((sd(&star) - sd(&mu)).abs() < 1e-4);
}

/// Draw hyperparameters from their prior, simulate one tiny study, and keep
/// one posterior draw: across replicates the kept draws follow the prior.
#[test]
fn prior_posterior_simulation_reproduces_the_prior() {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Binomial, Distribution, StandardNormal};
    let priors = HyperPriors::default();
    let reps = 400;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    let (mut mus, mut taus) = (Vec::new(), Vec::new());
    for rep in 0..reps {
        let mu: f64 = 2.0 * rng.sample::<f64, _>(StandardNormal);
        let tau: f64 = rng.sample::<f64, _>(StandardNormal).abs();
        let theta = mu + tau * rng.sample::<f64, _>(StandardNormal);
        let p = 1.0 / (1.0 + (-theta).exp());
        let r = Binomial::new(1, p).unwrap().sample(&mut rng);
        let data = StudyDataset::binomial(&[("fake", r, 1)]).unwrap();
        let opts = MapOptions {
            chains: 1,
            warmup: 300,
            iter: 30,
            seed: 1000 + rep,
        };
        let fit = gmap(&data, Family::Beta, priors, opts).unwrap();
        mus.push(*fit.mu().last().unwrap());
        taus.push(*fit.tau().last().unwrap());
    }
    let n = reps as f64;
    let mu_se = 2.0 / n.sqrt();
    assert!(mean(&mus).abs() < 3.0 * mu_se, "mu mean {}", mean(&mus));
    let tau_mean = (2.0 / std::f64::consts::PI).sqrt();
    let tau_se = (1.0 - 2.0 / std::f64::consts::PI).sqrt() / n.sqrt();
    assert!(
        (mean(&taus) - tau_mean).abs() < 3.0 * tau_se,
        "tau mean {}",
        mean(&taus)
    );
}

/// Updating the fitted MAP mixture with a new trial agrees with adding the
/// trial to the meta-analysis.
#[test]
fn mixture_update_agrees_with_joint_analysis() {
    use mapprior::conjugate::{posterior_update, ObservedData};
    use mapprior::em::{auto_fit, EmOptions};
    let (r, n) = (10, 40);
    let fit = gmap(&common::as_data(), Family::Beta, HyperPriors::default(), long()).unwrap();
    let mix = auto_fit(&fit.map_prior_sample().unwrap(), Family::Beta, 4, EmOptions::default())
        .unwrap()
        .mixture;
    let updated = posterior_update(&mix, &ObservedData::Binomial { r, n }).unwrap();

    let mut rows: Vec<(&str, u64, u64)> = common::AS_STUDIES.to_vec();
    rows.push(("new", r, n));
    let joint = gmap(
        &StudyDataset::binomial(&rows).unwrap(),
        Family::Beta,
        HyperPriors::default(),
        long(),
    )
    .unwrap();
    let new: Vec<f64> = joint
        .theta(rows.len() - 1)
        .iter()
        .map(|&x| Link::Logit.inverse(x))
        .collect();
    assert!(
        (updated.mean() - mean(&new)).abs() < 0.02,
        "{} vs {}",
        updated.mean(),
        mean(&new)
    );
}
