//! The subcommands. Each builds one report section from a resolved
//! configuration; [`run`] dispatches and writes the output.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use mapprior::conjugate::{posterior_update, predictive, PredictiveKind};
use mapprior::design::Design;
use mapprior::em::{auto_fit, em_fit, EmOptions, EmSample};
use mapprior::ess::{ess_with, EssOptions};
use mapprior::map_mcmc::{gmap, MapAnalysis, StudyDataset};
use mapprior::mixture::{default_robust_n, vague_component, SUMMARY_PROBS};
use mapprior::{Family, Mixture};
use serde::Serialize;

use crate::cli::{Cli, Command, Format};
use crate::config::{DesignConfig, FamilyName, RunConfig, StageMixtures};
use crate::error::{CliError, CliResult};
use crate::forest::{forest_data, render_svg, ForestPlotData};
use crate::ingest::{read_draws, read_studies, DataKind, DatasetSummary};
use crate::report::*;

/// Points of the fitted density written by `fit`.
const DENSITY_POINTS: usize = 101;
/// Upper-tail mass left out of negative-binomial predictive tables.
const PMF_TAIL: f64 = 1e-6;
const PMF_MAX_ROWS: u64 = 100_000;

fn require<T: Clone>(v: &Option<T>, what: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| CliError::validation(format!("missing {what}")))
}

fn family_of(cfg: &RunConfig) -> CliResult<Family> {
    require(&cfg.family, "--family")?.family(cfg.sigma)
}

fn load_data(cfg: &RunConfig) -> CliResult<(DataKind, StudyDataset, Family)> {
    let path = require(&cfg.data, "study table (--data)")?;
    let (kind, data) = read_studies(&path)?;
    let name = cfg.family.unwrap_or_else(|| FamilyName::for_data(kind));
    if name != FamilyName::for_data(kind) {
        return Err(CliError::validation(format!(
            "family {name:?} does not match {kind:?} study data"
        )));
    }
    let family = name.family(cfg.sigma)?;
    info!("read {} {kind:?} studies from {}", data.len(), path.display());
    Ok((kind, data, family))
}

pub fn map_section(cfg: &RunConfig) -> CliResult<(MapSection, MapAnalysis)> {
    let (kind, data, family) = load_data(cfg)?;
    let analysis = gmap(&data, family, cfg.priors, cfg.mcmc.options(cfg.seed))?;
    for m in &analysis.diagnostics().messages {
        warn!("{m}");
    }
    let draws = cfg.mcmc.keep_draws.then(|| DrawDump {
        mu: analysis.mu(),
        tau: analysis.tau(),
        theta_star: analysis.theta_star(),
    });
    let section = MapSection {
        family,
        link: analysis.link,
        dataset: DatasetSummary::new(kind, &data),
        theta_star: analysis.theta_star_summary(),
        tau: analysis.tau_summary(),
        mu: mapprior::map_mcmc::DrawSummary::from_draws(&analysis.mu()),
        shrinkage: analysis.shrinkage_estimates(),
        diagnostics: analysis.diagnostics().clone(),
        draws,
    };
    Ok((section, analysis))
}

fn fit_sample(cfg: &RunConfig, sample: &EmSample, family: Family, source: String) -> CliResult<FitSection> {
    let opts = EmOptions::default().with_seed(cfg.seed);
    let fit = match cfg.fit.k {
        Some(k) => em_fit(sample, family, k, opts)?,
        None => auto_fit(sample, family, cfg.fit.k_max, opts)?,
    };
    if !fit.converged {
        warn!("EM stopped after {} iterations without converging", fit.iterations);
    }
    let values = sample.values();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let density = (0..DENSITY_POINTS)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (DENSITY_POINTS - 1) as f64;
            GridPoint {
                x,
                density: fit.mixture.density(x),
            }
        })
        .collect();
    Ok(FitSection {
        source,
        draws: values.len(),
        summary: fit.mixture.summary()?,
        histogram: Histogram::new(values, cfg.fit.bins),
        density,
        fit,
    })
}

pub fn fit_section(cfg: &RunConfig) -> CliResult<FitSection> {
    let family = family_of(cfg)?;
    let path = require(&cfg.fit.draws, "draws file (--draws)")?;
    let sample = EmSample::new(read_draws(&path)?, family)?;
    fit_sample(cfg, &sample, family, path.display().to_string())
}

fn describe(m: &Mixture) -> String {
    let c = m.components()[0];
    match m.family() {
        Family::Beta => format!("Beta({}, {})", c.a, c.b),
        Family::Normal { .. } => format!("Normal(mean {}, sd {})", c.a, c.b),
        Family::Gamma { .. } => format!("Gamma(shape {}, rate {})", c.a, c.b),
    }
}

pub fn robust_section(cfg: &RunConfig, input: Mixture) -> CliResult<RobustSection> {
    let weight = require(&cfg.robust.weight, "robust weight (--weight)")?;
    let mean = require(&cfg.robust.mean, "mean of the vague component (--mean)")?;
    let family = input.family();
    let n = cfg.robust.n.unwrap_or_else(|| default_robust_n(family));
    let vague = vague_component(family, mean, n)?;
    let robust = input.robustify(weight, mean, n)?;
    let description = format!(
        "vague component {} with prior sample size n = {n}, weight {weight}",
        describe(&vague)
    );
    Ok(RobustSection {
        summary: robust.summary()?,
        input,
        vague,
        convention: VagueConvention {
            weight,
            mean,
            n,
            description,
        },
        robust,
    })
}

pub fn ess_rows(cfg: &RunConfig, mix: &Mixture) -> CliResult<Vec<EssRow>> {
    let opts = EssOptions {
        divergent_as_infinity: true,
        ..EssOptions::default()
    };
    cfg.ess
        .methods
        .iter()
        .map(|&method| {
            let r = ess_with(mix, method, opts)?;
            let diverges = r.value.is_infinite();
            Ok(EssRow {
                method,
                value: (!diverges).then_some(r.value),
                diverges,
                reference_point: r.reference_point,
                note: r.note,
            })
        })
        .collect()
}

fn prior_of(cfg: &RunConfig) -> CliResult<Mixture> {
    require(&cfg.prior, "prior mixture (--prior)")?.resolve(&StageMixtures::default())
}

pub fn update_section(cfg: &RunConfig) -> CliResult<UpdateSection> {
    let prior = prior_of(cfg)?;
    let data = require(&cfg.update, "trial data (e.g. --r and --n)")?;
    let posterior = posterior_update(&prior, &data)?;
    Ok(UpdateSection {
        summary: posterior.summary()?,
        prior,
        data,
        posterior,
    })
}

pub fn predict_section(cfg: &RunConfig) -> CliResult<PredictSection> {
    let prior = prior_of(cfg)?;
    let n = require(&cfg.predict_n, "trial size (--n)")?;
    let pred = predictive(&prior, n)?;
    let mut table = Vec::new();
    let mut quantiles = Vec::new();
    match pred.kind {
        PredictiveKind::Normal { .. } => {
            let comps: Vec<_> = pred.components.iter().map(|c| (c.w, c.a, c.b)).collect();
            let sd = pred.components[0].b;
            let law = Mixture::normal(sd, &comps)?;
            for p in SUMMARY_PROBS {
                quantiles.push(mapprior::mixture::QuantilePoint {
                    p,
                    value: law.quantile(p)?,
                });
            }
        }
        kind => {
            let top = match kind {
                PredictiveKind::BetaBinomial { n } => Some(n),
                _ => None,
            };
            let mut cdf = 0.0;
            for y in 0.. {
                let pmf = pred.pmf(y);
                cdf += pmf;
                table.push(PmfRow {
                    y,
                    pmf,
                    cdf: cdf.min(1.0),
                });
                let done = match top {
                    Some(n) => y == n,
                    None => cdf >= 1.0 - PMF_TAIL || y >= PMF_MAX_ROWS,
                };
                if done {
                    break;
                }
            }
        }
    }
    Ok(PredictSection {
        mean: pred.mean(),
        prior,
        n,
        predictive: pred,
        table,
        quantiles,
    })
}

fn design_of(cfg: &RunConfig) -> CliResult<(DesignConfig, Design)> {
    let d = require(&cfg.design, "design (--design)")?;
    let stages = StageMixtures::default();
    Ok((d.resolved(&stages)?, d.build(&stages)?))
}

fn oc_rows(cfg: &RunConfig, design: &Design) -> CliResult<Vec<OcRow>> {
    let t1 = &cfg.oc.theta;
    if design.arm2.is_none() {
        let oc = design.oc1_grid(t1)?;
        Ok(t1
            .iter()
            .zip(oc)
            .map(|(&theta1, oc)| OcRow {
                theta1,
                theta2: None,
                oc,
            })
            .collect())
    } else {
        let t2 = cfg.oc.theta2.as_ref().unwrap_or(t1);
        let oc = design.oc2_grid(t1, t2)?;
        Ok(t1
            .iter()
            .zip(t2)
            .zip(oc)
            .map(|((&theta1, &theta2), oc)| OcRow {
                theta1,
                theta2: Some(theta2),
                oc,
            })
            .collect())
    }
}

pub fn boundary_section(cfg: &RunConfig) -> CliResult<BoundarySection> {
    let (design, built) = design_of(cfg)?;
    Ok(BoundarySection {
        boundary: built.boundary()?,
        design,
    })
}

pub fn oc_section(cfg: &RunConfig) -> CliResult<OcSection> {
    let (design, built) = design_of(cfg)?;
    Ok(OcSection {
        oc: oc_rows(cfg, &built)?,
        design,
    })
}

pub fn pos_section(cfg: &RunConfig) -> CliResult<PosSection> {
    let (design, built) = design_of(cfg)?;
    let stages = StageMixtures::default();
    let prior1 = match &cfg.pos.prior1 {
        Some(s) => s.resolve(&stages)?,
        None => built.arm1.prior.clone(),
    };
    let (prior2, pos) = match &built.arm2 {
        None => (None, built.pos1(&prior1)?),
        Some(arm2) => {
            let prior2 = match &cfg.pos.prior2 {
                Some(s) => s.resolve(&stages)?,
                None => arm2.prior.clone(),
            };
            let pos = built.pos2(&prior1, &prior2)?;
            (Some(prior2), pos)
        }
    };
    Ok(PosSection {
        design,
        prior1,
        prior2,
        pos,
    })
}

/// Pull the map section out of a `map` or `pipeline` report.
fn read_analysis(path: &Path) -> CliResult<MapSection> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let result = value.get("result").unwrap_or(&value);
    let section = result
        .get("map")
        .filter(|m| m.get("shrinkage").is_some())
        .unwrap_or(result);
    serde_json::from_value(section.clone())
        .map_err(|e| CliError::validation(format!("{}: not a map analysis: {e}", path.display())))
}

fn forest_of(map: &MapSection, svg: Option<&PathBuf>) -> CliResult<ForestPlotData> {
    let forest = forest_data(&map.dataset.rows, &map.shrinkage)?;
    if let Some(p) = svg {
        fs::write(p, render_svg(&forest)).map_err(|e| CliError::io(p, e))?;
    }
    Ok(forest)
}

pub fn forest_section(cfg: &RunConfig) -> CliResult<ForestSection> {
    let map = match &cfg.forest.analysis {
        Some(p) => read_analysis(p)?,
        None => map_section(cfg)?.0,
    };
    Ok(ForestSection {
        forest: forest_of(&map, cfg.forest.svg.as_ref())?,
    })
}

/// Stage outputs of a pipeline run, in the order they were produced.
pub struct PipelineRun {
    pub section: PipelineSection,
    pub files: Vec<(String, serde_json::Value)>,
}

fn stage<T>(name: &'static str, r: CliResult<T>) -> CliResult<T> {
    r.map_err(|e| e.in_stage(name))
}

pub fn pipeline(cfg: &RunConfig) -> CliResult<PipelineRun> {
    if cfg.designs.is_empty() && cfg.design.is_none() {
        return Err(CliError::validation(
            "the pipeline needs at least one design (\"designs\")",
        ));
    }
    // check the robust settings before spending time on MCMC
    require(&cfg.robust.weight, "robust weight (--weight)")?;
    require(&cfg.robust.mean, "mean of the vague component (--mean)")?;

    let (map, analysis) = stage("map", map_section(cfg))?;
    info!("map: MAP prior mean {:.4}", map.theta_star.mean);
    let fit = stage(
        "fit",
        analysis
            .map_prior_sample()
            .map_err(CliError::from)
            .and_then(|s| fit_sample(cfg, &s, analysis.family, "map".into())),
    )?;
    info!("fit: {} components", fit.fit.mixture.len());
    let robust = stage("robustify", robust_section(cfg, fit.fit.mixture.clone()))?;
    let ess = stage(
        "ess",
        (|| {
            Ok(PipelineEss {
                map: ess_rows(cfg, &fit.fit.mixture)?,
                robust: ess_rows(cfg, &robust.robust)?,
            })
        })(),
    )?;
    let stages = StageMixtures {
        map: Some(fit.fit.mixture.clone()),
        robust: Some(robust.robust.clone()),
    };
    let named: Vec<(String, &DesignConfig)> = match &cfg.design {
        Some(d) if cfg.designs.is_empty() => vec![("design".into(), d)],
        _ => cfg.designs.iter().map(|d| (d.name.clone(), &d.design)).collect(),
    };
    let mut designs = Vec::new();
    for (name, d) in named {
        let outcome = stage(
            "design",
            (|| {
                let built = d.build(&stages)?;
                Ok(DesignOutcome {
                    oc: oc_rows(cfg, &built)?,
                    design: d.resolved(&stages)?,
                    name: name.clone(),
                })
            })(),
        )?;
        designs.push(outcome);
    }
    let forest = stage("forest", forest_of(&map, cfg.forest.svg.as_ref()))?;

    let mut files = Vec::new();
    let mut add = |name: String, v: &dyn erased::Json| files.push((name, v.value()));
    add("map.json".into(), &map);
    add("fit.json".into(), &fit);
    add("robust.json".into(), &robust);
    add("ess.json".into(), &ess);
    for d in &designs {
        add(format!("oc_{}.json", d.name), d);
    }
    add("forest.json".into(), &forest);
    Ok(PipelineRun {
        section: PipelineSection {
            map,
            fit,
            robust,
            ess,
            designs,
            forest,
        },
        files,
    })
}

mod erased {
    pub trait Json {
        fn value(&self) -> serde_json::Value;
    }

    impl<T: serde::Serialize> Json for T {
        fn value(&self) -> serde_json::Value {
            serde_json::to_value(self).expect("report sections serialise")
        }
    }
}

fn emit<T: Serialize + ToCsv>(cli: &Cli, cfg: RunConfig, result: T) -> CliResult<()> {
    let text = match cli.global.format {
        Format::Json => Report { config: cfg, result }.to_json()?,
        Format::Csv => result.csv()?,
    };
    write_out(cli.global.out.as_deref(), &text)
}

fn write_out(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn save_draws(path: &Path, draws: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(["theta_star"]).map_err(|e| CliError::io(path, e))?;
    for d in draws {
        w.write_record([format!("{d}")]).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn run_pipeline(cli: &Cli, cfg: RunConfig) -> CliResult<()> {
    let run = pipeline(&cfg)?;
    let report = Report {
        config: cfg,
        result: run.section,
    };
    match (&cli.global.out, cli.global.format) {
        (Some(dir), format) => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            for (name, value) in run.files {
                let stage = Report {
                    config: report.config.clone(),
                    result: value,
                };
                write_out(Some(&dir.join(name)), &stage.to_json()?)?;
            }
            write_out(Some(&dir.join("report.json")), &report.to_json()?)?;
            if format == Format::Csv {
                write_out(Some(&dir.join("oc.csv")), &report.result.csv()?)?;
            }
            Ok(())
        }
        (None, Format::Json) => write_out(None, &report.to_json()?),
        (None, Format::Csv) => write_out(None, &report.result.csv()?),
    }
}

/// Execute the parsed command line.
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Map { save_draws: path, .. } => {
            let (section, analysis) = map_section(&cfg)?;
            if let Some(p) = path {
                save_draws(p, &analysis.theta_star())?;
            }
            emit(cli, cfg, section)
        }
        Command::Fit { .. } => {
            let s = fit_section(&cfg)?;
            emit(cli, cfg, s)
        }
        Command::Robustify { .. } => {
            let s = robust_section(&cfg, prior_of(&cfg)?)?;
            emit(cli, cfg, s)
        }
        Command::Ess { .. } => {
            let prior = prior_of(&cfg)?;
            let s = EssSection {
                ess: ess_rows(&cfg, &prior)?,
                prior,
            };
            emit(cli, cfg, s)
        }
        Command::Update { .. } => {
            let s = update_section(&cfg)?;
            emit(cli, cfg, s)
        }
        Command::Predict { .. } => {
            let s = predict_section(&cfg)?;
            emit(cli, cfg, s)
        }
        Command::Boundary { .. } => {
            let s = boundary_section(&cfg)?;
            emit(cli, cfg, s)
        }
        Command::Oc { .. } => {
            let s = oc_section(&cfg)?;
            emit(cli, cfg, s)
        }
        Command::Pos { .. } => {
            let s = pos_section(&cfg)?;
            emit(cli, cfg, s)
        }
        Command::Forest { .. } => {
            let s = forest_section(&cfg)?;
            emit(cli, cfg, s)
        }
        Command::Pipeline { .. } => run_pipeline(cli, cfg),
    }
}
