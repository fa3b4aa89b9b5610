//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::time::{Duration, Instant};

use mapprior::conjugate::{posterior_update, predictive, ObservedData};
use mapprior::design::{evaluate_decision, DecisionFunction, Design};
use mapprior::em::{auto_fit, em_fit, EmOptions, EmSample};
use mapprior::ess::{ess, EssMethod};
use mapprior::map_mcmc::{gmap, HyperPriors, MapOptions, TauPrior};
use mapprior::mixture::default_robust_n;
use mapprior::{Family, GammaLikelihood, Link, Mixture};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn as_decision() -> DecisionFunction {
    DecisionFunction::two_sample(&[0.95], &[0.0], false, Link::Identity).unwrap()
}

const THETAS: [f64; 3] = [0.25, 0.5, 0.75];

fn oc_at(design: &Design) -> Vec<f64> {
    THETAS.iter().map(|&t| design.oc2(t, t).unwrap()).collect()
}

fn c1_nonrobust_oc() -> Outcome {
    let start = Instant::now();
    let design = Design::two_sample(as_decision(), as_treatment_prior(), 24.0, as_map_mixture(), 6.0).unwrap();
    let oc = oc_at(&design);
    let took = start.elapsed();
    let target = [0.020, 0.320, 0.598];
    let ok = oc.iter().zip(target).all(|(x, t)| within(*x, t, 0.002)) && took < Duration::from_secs(1);
    outcome(
        ok,
        format!(
            "oc = {oc:.4?} target {target:?} +-0.002, {:.3}s (< 1s)",
            took.as_secs_f64()
        ),
    )
}

fn c2_robust_oc() -> Outcome {
    let n_r = default_robust_n(Family::Beta);
    let robust = as_map_mixture().robustify(0.2, 0.5, n_r).unwrap();
    let design = Design::two_sample(as_decision(), as_treatment_prior(), 24.0, robust, 6.0).unwrap();
    let oc = oc_at(&design);
    let target = [0.018, 0.190, 0.173];
    let ok = oc.iter().zip(target).all(|(x, t)| within(*x, t, 0.005));
    let vague = mapprior::mixture::vague_component(Family::Beta, 0.5, n_r).unwrap();
    let c = vague.components()[0];
    outcome(
        ok,
        format!(
            "vague component Beta({}, {}) (mean 0.5, n_r = {n_r}): oc = {oc:.4?} target {target:?} +-0.005",
            c.a, c.b
        ),
    )
}

fn c3_mcmc() -> Outcome {
    let start = Instant::now();
    let priors = HyperPriors {
        mu_mean: 0.0,
        mu_sd: 2.0,
        tau: TauPrior::HalfNormal { sd: 1.0 },
    };
    let fit = gmap(&as_data(), Family::Beta, priors, MapOptions::default()).unwrap();
    let took = start.elapsed();
    let star = fit.theta_star_summary();
    let q975 = star.quantile(0.975).unwrap();
    let tau_med = fit.tau_summary().quantile(0.5).unwrap();
    let rhat = fit.diagnostics.max_rhat.unwrap_or(f64::NAN);
    let ok = within(star.mean, 0.259, 0.010)
        && within(star.sd, 0.089, 0.015)
        && within(q975, 0.472, 0.025)
        && within(tau_med, 0.355, 0.05)
        && rhat <= 1.05
        && took < Duration::from_secs(30);
    outcome(
        ok,
        format!(
            "theta* mean {:.4} sd {:.4} q97.5 {:.4}; tau median {:.4}; max Rhat {:.4}; {:.2}s",
            star.mean,
            star.sd,
            q975,
            tau_med,
            rhat,
            took.as_secs_f64()
        ),
    )
}

fn c4_quantile() -> Outcome {
    let q = as_map_mixture().quantile(0.975).unwrap();
    outcome(within(q, 0.48, 0.01), format!("q97.5 = {q:.5} (target 0.48 +-0.01)"))
}

fn c5_ess() -> Outcome {
    let b = Mixture::beta(&[(1.0, 11.0, 32.0)]).unwrap();
    let moment = ess(&b, EssMethod::Moment).unwrap();
    let elir = ess(&b, EssMethod::Elir).unwrap();
    let mut ok = (moment - 43.0).abs() < 1e-9 && within(elir, 43.0, 0.05);
    let mut detail = format!("Beta(11,32): moment {moment:.10}, elir {elir:.6}");

    let mut worst_normal: f64 = 0.0;
    for &(sigma, s) in &[(1.0, 0.1), (2.0, 0.5), (10.0, 3.0)] {
        let n = Mixture::normal(sigma, &[(1.0, 0.3, s)]).unwrap();
        let target = sigma * sigma / (s * s);
        for m in [EssMethod::Moment, EssMethod::Elir] {
            worst_normal = worst_normal.max((ess(&n, m).unwrap() - target).abs());
        }
    }
    ok &= worst_normal <= 1e-6;
    detail += &format!("; normal max |ess - sigma^2/s^2| {worst_normal:.2e}");

    // E over the m-observation predictive of ELIR(posterior) minus m
    // should give back ELIR(prior).
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in [1u64, 5, 10] {
        let per_y: Vec<f64> = (0..=m)
            .map(|y| {
                let post = posterior_update(&b, &ObservedData::Binomial { r: y, n: m }).unwrap();
                ess(&post, EssMethod::Elir).unwrap()
            })
            .collect();
        let pred = predictive(&b, m as f64).unwrap();
        let draws = 10_000;
        let mean: f64 = (0..draws).map(|_| per_y[pred.draw(&b, &mut rng) as usize]).sum::<f64>() / draws as f64;
        let rel = ((mean - m as f64) - elir).abs() / elir;
        ok &= rel <= 0.02;
        detail += &format!("; m={m}: rel {rel:.2e}");
    }
    outcome(ok, detail)
}

/// Random beta mixture with one or two components.
fn random_beta(rng: &mut ChaCha8Rng) -> Mixture {
    let k = rng.random_range(1..=2);
    let comps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.random_range(0.2..1.0),
                rng.random_range(0.5..12.0),
                rng.random_range(0.5..12.0),
            )
        })
        .collect();
    Mixture::beta(&comps).unwrap()
}

fn c6_design_brute_force() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut boundary_mismatch = 0usize;
    let mut both = [0usize; 2];
    for _ in 0..50 {
        let prior1 = random_beta(&mut rng);
        let prior2 = random_beta(&mut rng);
        let n1: u64 = rng.random_range(1..=25);
        let n2: u64 = rng.random_range(1..=25);
        let k = rng.random_range(1..=2);
        let p: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..0.99)).collect();
        let q: Vec<f64> = (0..k).map(|_| rng.random_range(-0.3..0.3)).collect();
        let lower_tail = rng.random_bool(0.5);
        both[lower_tail as usize] += 1;
        let link = if rng.random_bool(0.8) {
            Link::Identity
        } else {
            Link::Logit
        };
        let d = DecisionFunction::two_sample(&p, &q, lower_tail, link).unwrap();
        let design = Design::two_sample(d.clone(), prior1.clone(), n1 as f64, prior2.clone(), n2 as f64).unwrap();

        // decision at every outcome pair, straight from the posteriors
        let post1: Vec<Mixture> = (0..=n1)
            .map(|y| posterior_update(&prior1, &ObservedData::Binomial { r: y, n: n1 }).unwrap())
            .collect();
        let post2: Vec<Mixture> = (0..=n2)
            .map(|y| posterior_update(&prior2, &ObservedData::Binomial { r: y, n: n2 }).unwrap())
            .collect();
        let table: Vec<Vec<bool>> = post2
            .iter()
            .map(|p2| {
                post1
                    .iter()
                    .map(|p1| evaluate_decision(&d, p1, Some(p2)).unwrap())
                    .collect()
            })
            .collect();
        for (y2, row) in table.iter().enumerate() {
            let region = design.region_given(y2 as f64).unwrap();
            boundary_mismatch += row
                .iter()
                .enumerate()
                .filter(|(y1, s)| region.contains(*y1 as f64) != **s)
                .count();
        }
        for _ in 0..3 {
            let (t1, t2) = (rng.random::<f64>(), rng.random::<f64>());
            let mut brute = 0.0;
            for (y2, row) in table.iter().enumerate() {
                for (y1, s) in row.iter().enumerate() {
                    if *s {
                        brute += binom_pmf(y1 as u64, n1, t1) * binom_pmf(y2 as u64, n2, t2);
                    }
                }
            }
            worst = worst.max((design.oc2(t1, t2).unwrap() - brute).abs());
        }
    }
    let took = start.elapsed();
    let ok = worst <= 1e-12 && boundary_mismatch == 0 && took < Duration::from_secs(60);
    outcome(
        ok,
        format!(
            "50 designs ({} upper, {} lower tail): max |oc - brute| {worst:.2e}, boundary mismatches {boundary_mismatch}, {:.2}s",
            both[0],
            both[1],
            took.as_secs_f64()
        ),
    )
}

fn c7_pos() -> Outcome {
    let d = as_decision();
    let map = as_map_mixture();
    let design = Design::two_sample(d.clone(), as_treatment_prior(), 24.0, map.clone(), 6.0).unwrap();
    let theta1 = Mixture::beta(&[(1.0, 8.0, 12.0)]).unwrap();
    let pos = design.pos2(&theta1, &map).unwrap();

    let (n1, n2) = (24u64, 6u64);
    let post1: Vec<Mixture> = (0..=n1)
        .map(|y| posterior_update(&as_treatment_prior(), &ObservedData::Binomial { r: y, n: n1 }).unwrap())
        .collect();
    let table: Vec<Vec<bool>> = (0..=n2)
        .map(|y2| {
            let p2 = posterior_update(&map, &ObservedData::Binomial { r: y2, n: n2 }).unwrap();
            post1
                .iter()
                .map(|p1| evaluate_decision(&d, p1, Some(&p2)).unwrap())
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let reps = 1_000_000;
    let mut hits = 0u64;
    for _ in 0..reps {
        let t1 = theta1.draw(&mut rng);
        let t2 = map.draw(&mut rng);
        let y1 = Binomial::new(n1, t1).unwrap().sample(&mut rng);
        let y2 = Binomial::new(n2, t2).unwrap().sample(&mut rng);
        hits += table[y2 as usize][y1 as usize] as u64;
    }
    let mc = hits as f64 / reps as f64;
    let se = (mc * (1.0 - mc) / reps as f64).sqrt();
    let z = (pos - mc) / se;
    outcome(
        z.abs() <= 3.0,
        format!("pos {pos:.5}, Monte Carlo {mc:.5} (se {se:.5}), z = {z:.2}"),
    )
}

fn kolmogorov(mix: &Mixture, values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = mix.cdf(*x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0))
}

fn c8_em() -> Outcome {
    let mut all_monotone = true;
    let mut fits = 0;

    let truth = Mixture::beta(&[(1.0, 4.0, 8.0)]).unwrap();
    let s = EmSample::new(truth.sample(10_000, 11), Family::Beta).unwrap();
    let fit = em_fit(&s, Family::Beta, 1, EmOptions::default()).unwrap();
    all_monotone &= monotone(&fit.trace);
    fits += 1;
    let c = fit.mixture.components()[0];
    let recovered = within(c.a / 4.0, 1.0, 0.1) && within(c.b / 8.0, 1.0, 0.1);

    let map = gmap(&as_data(), Family::Beta, HyperPriors::default(), MapOptions::default()).unwrap();
    let sample = map.map_prior_sample().unwrap();
    for k in 1..=4 {
        let f = em_fit(&sample, Family::Beta, k, EmOptions::default().with_seed(1 + k as u64)).unwrap();
        all_monotone &= monotone(&f.trace);
        fits += 1;
    }
    let gammas = Mixture::gamma(GammaLikelihood::Poisson, &[(0.6, 3.0, 2.0), (0.4, 30.0, 3.0)]).unwrap();
    let gs = EmSample::new(gammas.sample(5000, 3), gammas.family()).unwrap();
    let normals = Mixture::normal(1.0, &[(0.5, -1.0, 0.5), (0.5, 2.0, 1.0)]).unwrap();
    let ns = EmSample::new(normals.sample(5000, 4), normals.family()).unwrap();
    for k in 1..=3 {
        for (smp, fam) in [(&gs, gammas.family()), (&ns, normals.family())] {
            let f = em_fit(smp, fam, k, EmOptions::default()).unwrap();
            all_monotone &= monotone(&f.trace);
            fits += 1;
        }
    }

    let best = auto_fit(&sample, Family::Beta, 4, EmOptions::default()).unwrap();
    all_monotone &= monotone(&best.trace);
    let ks = kolmogorov(&best.mixture, sample.values());
    outcome(
        all_monotone && recovered && ks < 0.02,
        format!(
            "monotone on {fits} fits: {all_monotone}; Beta(4,8) -> Beta({:.3}, {:.3}); auto_fit K={} Kolmogorov {ks:.4} (< 0.02)",
            c.a,
            c.b,
            best.mixture.len()
        ),
    )
}

/// Largest CDF difference between the conjugate posterior and a posterior
/// computed by brute-force quadrature of prior x likelihood.
fn quadrature_gap(prior: &Mixture, data: &ObservedData, lik: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let post = posterior_update(prior, data).unwrap();
    let unnorm = |t: f64| prior.density(t) * lik(t);
    let grid = 200;
    let h = (hi - lo) / grid as f64;
    let pieces: Vec<f64> = (0..grid)
        .map(|i| gauss_legendre(&unnorm, lo + i as f64 * h, lo + (i + 1) as f64 * h, 8))
        .collect();
    let z: f64 = pieces.iter().sum();
    let mut cum = 0.0;
    let mut gap: f64 = 0.0;
    for (i, p) in pieces.iter().enumerate() {
        cum += p;
        let x = lo + (i + 1) as f64 * h;
        gap = gap.max((cum / z - post.cdf(x)).abs());
    }
    gap
}

fn c9_conjugate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = [0.0f64; 3];
    let comps = |rng: &mut ChaCha8Rng, lo: f64, hi: f64, s: (f64, f64)| -> Vec<(f64, f64, f64)> {
        let k = rng.random_range(1..=3);
        (0..k)
            .map(|_| {
                (
                    rng.random_range(0.1..1.0),
                    rng.random_range(lo..hi),
                    rng.random_range(s.0..s.1),
                )
            })
            .collect()
    };
    for _ in 0..20 {
        // beta / binomial
        let prior = Mixture::beta(&comps(&mut rng, 1.0, 15.0, (1.0, 15.0))).unwrap();
        let n: u64 = rng.random_range(1..=40);
        let r: u64 = rng.random_range(0..=n);
        let lik = |t: f64| t.powi(r as i32) * (1.0 - t).powi((n - r) as i32);
        let g = quadrature_gap(&prior, &ObservedData::Binomial { r, n }, lik, 0.0, 1.0);
        worst[0] = worst[0].max(g);

        // normal with known sigma
        let sigma = rng.random_range(0.5..3.0);
        let prior = Mixture::normal(sigma, &comps(&mut rng, -2.0, 2.0, (0.3, 2.0))).unwrap();
        let m: f64 = rng.random_range(1.0..30.0);
        let ybar = rng.random_range(-2.0..2.0);
        let lik = |t: f64| (-0.5 * m * (ybar - t).powi(2) / (sigma * sigma)).exp();
        let g = quadrature_gap(&prior, &ObservedData::Normal { mean: ybar, n: m }, lik, -15.0, 15.0);
        worst[1] = worst[1].max(g);

        // gamma / poisson
        let prior = Mixture::gamma(GammaLikelihood::Poisson, &comps(&mut rng, 1.0, 10.0, (0.5, 5.0))).unwrap();
        let exposure = rng.random_range(0.5..20.0);
        let count: u64 = rng.random_range(0..=30);
        let lik = |t: f64| (count as f64 * (t * exposure).ln() - t * exposure).exp();
        let g = quadrature_gap(&prior, &ObservedData::Poisson { count, exposure }, lik, 0.0, 80.0);
        worst[2] = worst[2].max(g);
    }
    outcome(
        worst.iter().all(|w| *w <= 1e-6),
        format!(
            "sup |F_conj - F_quad| beta {:.2e}, normal {:.2e}, gamma {:.2e} (<= 1e-6)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 non-robust OC", c1_nonrobust_oc),
        ("2 robust OC", c2_robust_oc),
        ("3 MAP MCMC", c3_mcmc),
        ("4 mixture quantile", c4_quantile),
        ("5 ESS identities", c5_ess),
        ("6 design brute force", c6_design_brute_force),
        ("7 PoS oracle", c7_pos),
        ("8 EM properties", c8_em),
        ("9 conjugate oracle", c9_conjugate),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let r = run();
        if !r.pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
