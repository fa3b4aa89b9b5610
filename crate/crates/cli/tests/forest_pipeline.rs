mod common;

use std::fs;

use common::*;
use mapprior_cli::forest::ForestPlotData;
use mapprior_cli::report::{PipelineSection, Report};

/// P(X ≥ r) and P(X ≤ r) for X ~ Binomial(n, p), summed term by term.
fn binomial_tails(r: u64, n: u64, p: f64) -> (f64, f64) {
    let mut pmf = (1.0 - p).powi(n as i32);
    let (mut lower, mut upper) = (0.0, 0.0);
    for k in 0..=n {
        if k <= r {
            lower += pmf;
        }
        if k >= r {
            upper += pmf;
        }
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
    }
    (upper, lower)
}

fn forest_from(v: &serde_json::Value) -> ForestPlotData {
    serde_json::from_value(v["result"]["forest"].clone()).unwrap()
}

#[test]
fn forest_rows_and_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("map.json");
    let o = run(&[
        "map",
        "--data",
        p(&data("as_controls.csv")),
        "--warmup",
        "400",
        "--iter",
        "400",
        "--out",
        p(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = dir.path().join("forest.svg");
    let forest = forest_from(&json(&["forest", "--analysis", p(&report), "--svg", p(&svg)]));
    assert_eq!(forest.rows.len(), 8 + 2);
    assert_eq!(forest.ci_method, "clopper-pearson");
    for row in &forest.rows[..8] {
        let (e, ci) = (row.estimate.unwrap(), row.ci.unwrap());
        assert!(ci.contains(e), "{row:?}");
        assert!(row.cri.contains(row.shrinkage_median));
    }
    assert!(forest.rows[8..].iter().all(|r| r.estimate.is_none()));

    // study 5: 39 of 139
    let s5 = forest.rows.iter().find(|r| r.label == "5").unwrap();
    let ci = s5.ci.unwrap();
    let (upper_tail, _) = binomial_tails(39, 139, ci.lower);
    let (_, lower_tail) = binomial_tails(39, 139, ci.upper);
    assert!((upper_tail - 0.025).abs() < 1e-8, "{upper_tail}");
    assert!((lower_tail - 0.025).abs() < 1e-8, "{lower_tail}");

    let drawing = fs::read_to_string(&svg).unwrap();
    assert!(drawing.starts_with("<svg") && drawing.trim_end().ends_with("</svg>"));
    assert_eq!(drawing.matches("<circle").count(), 8 * 2 + 2);
}

#[test]
fn forest_of_a_single_study() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("one.csv");
    fs::write(&f, "study,r,n\nonly,7,30\n").unwrap();
    let forest = forest_from(&json(&["forest", "--data", p(&f), "--warmup", "200"]));
    assert_eq!(forest.rows.len(), 3);
}

#[test]
fn pipeline_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["pipeline", "--config", p(&data("as_pipeline.json")), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "map.json",
        "fit.json",
        "robust.json",
        "ess.json",
        "oc_map.json",
        "oc_robust.json",
        "forest.json",
        "report.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let text = fs::read_to_string(out.join("report.json")).unwrap();
    let report: Report<PipelineSection> = serde_json::from_str(&text).unwrap();
    let r = &report.result;
    assert_eq!(r.map.dataset.total_size, Some(513.0));
    assert!((r.map.theta_star.mean - 0.26).abs() < 0.03, "{}", r.map.theta_star.mean);
    assert!(!r.fit.fit.mixture.is_empty());
    assert_eq!(r.robust.robust.len(), r.fit.fit.mixture.len() + 1);
    assert_eq!(r.ess.map.len(), 3);
    assert_eq!(r.ess.robust.len(), 3);
    // the vague component lowers every finite ESS
    for (m, rb) in r.ess.map.iter().zip(&r.ess.robust) {
        assert!(rb.value.unwrap() < m.value.unwrap(), "{:?}", m.method);
    }
    assert_eq!(r.designs.len(), 2);
    let robust = &r.designs[1];
    assert_eq!(robust.name, "robust");
    for (row, t) in robust.oc.iter().zip([0.018, 0.190, 0.173]) {
        assert!((row.oc - t).abs() < 0.01, "{:?}", robust.oc);
    }
    assert_eq!(r.forest.rows.len(), 10);

    // stdout report equals the file, and reruns are byte-identical
    let o = run(&["pipeline", "--config", p(&data("as_pipeline.json"))]);
    assert_eq!(o.stdout, text.as_bytes());
}

#[test]
fn pipeline_failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"data": "{}", "robust": {{"weight": 0.2, "mean": 0.5}},
                "mcmc": {{"warmup": 200, "iter": 200}},
                "designs": [{{"name": "x", "design": {{"p": [0.95], "q": [0.0],
                  "arm1": {{"prior": {{"family": "normal", "sigma": 1, "components": [[1, 0, 1]]}}, "n": 10}},
                  "arm2": {{"prior": "map", "n": 6}}}}}}]}}"#,
            data("as_controls.csv").display()
        ),
    )
    .unwrap();
    let o = run(&["pipeline", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).lines().last().unwrap()).unwrap();
    assert_eq!(err["error"]["stage"], "design");
}
