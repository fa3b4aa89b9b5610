//! Run configuration.
//!
//! A run is described by one JSON document. Every field has a default and
//! command-line flags override what the file says. The resolved
//! configuration is copied into every report.

use std::path::{Path, PathBuf};

use mapprior::conjugate::ObservedData;
use mapprior::design::{DecisionFunction, Design};
use mapprior::ess::EssMethod;
use mapprior::map_mcmc::{HyperPriors, MapOptions};
use mapprior::{Family, GammaLikelihood, Link, Mixture};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::ingest::DataKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Beta,
    Normal,
    Poisson,
    Exponential,
}

impl FamilyName {
    pub fn family(self, sigma: Option<f64>) -> CliResult<Family> {
        Ok(match self {
            FamilyName::Beta => Family::Beta,
            FamilyName::Normal => Family::Normal {
                sigma: sigma.ok_or_else(|| {
                    CliError::validation("the normal family needs the sampling standard deviation (--sigma)")
                })?,
            },
            FamilyName::Poisson => Family::Gamma {
                likelihood: GammaLikelihood::Poisson,
            },
            FamilyName::Exponential => Family::Gamma {
                likelihood: GammaLikelihood::Exponential,
            },
        })
    }

    pub fn for_data(kind: DataKind) -> Self {
        match kind {
            DataKind::Binomial => FamilyName::Beta,
            DataKind::Normal => FamilyName::Normal,
            DataKind::Poisson => FamilyName::Poisson,
        }
    }
}

/// Output of an earlier pipeline stage that a mixture field can point to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageRef {
    Map,
    Robust,
}

/// A mixture given inline, by file, or by pipeline stage name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MixtureSource {
    Stage(StageRef),
    File { path: PathBuf },
    Inline(Mixture),
}

/// Mixtures produced by the pipeline so far.
#[derive(Debug, Clone, Default)]
pub struct StageMixtures {
    pub map: Option<Mixture>,
    pub robust: Option<Mixture>,
}

impl MixtureSource {
    pub fn resolve(&self, stages: &StageMixtures) -> CliResult<Mixture> {
        match self {
            MixtureSource::Inline(m) => Ok(m.clone()),
            MixtureSource::File { path } => read_mixture(path),
            MixtureSource::Stage(s) => {
                let found = match s {
                    StageRef::Map => &stages.map,
                    StageRef::Robust => &stages.robust,
                };
                found.clone().ok_or_else(|| {
                    CliError::validation(format!("mixture '{s:?}' is only available inside the pipeline"))
                })
            }
        }
    }

    fn rebase(&mut self, dir: &Path) {
        if let MixtureSource::File { path } = self {
            *path = rebase(dir, path);
        }
    }
}

/// Read a mixture JSON file. Reports that carry a mixture are accepted too:
/// the first field named `mixture`, `robust` or `posterior` is used.
pub fn read_mixture(path: &Path) -> CliResult<Mixture> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let candidate = ["robust", "posterior", "mixture"]
        .iter()
        .find_map(|k| value.get(*k).filter(|v| v.get("components").is_some()))
        .or_else(|| value.get("fit").and_then(|f| f.get("mixture")))
        .cloned()
        .unwrap_or(value);
    serde_json::from_value(candidate)
        .map_err(|e| CliError::validation(format!("{}: not a mixture: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub iter: usize,
    /// Include the full draws of μ, τ and θ⋆ in the report.
    pub keep_draws: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        let d = MapOptions::default();
        McmcConfig {
            chains: d.chains,
            warmup: d.warmup,
            iter: d.iter,
            keep_draws: false,
        }
    }
}

impl McmcConfig {
    pub fn options(&self, seed: u64) -> MapOptions {
        MapOptions {
            chains: self.chains,
            warmup: self.warmup,
            iter: self.iter,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Largest number of components tried when `k` is not fixed.
    pub k_max: usize,
    pub k: Option<usize>,
    /// Draws to fit; the pipeline uses the MAP sample instead.
    pub draws: Option<PathBuf>,
    /// Bins of the histogram written next to the fitted density.
    pub bins: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k_max: 4,
            k: None,
            draws: None,
            bins: 40,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustConfig {
    pub weight: Option<f64>,
    pub mean: Option<f64>,
    /// Prior sample size of the vague component; the family default when
    /// absent.
    pub n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EssConfig {
    pub methods: Vec<EssMethod>,
}

impl Default for EssConfig {
    fn default() -> Self {
        EssConfig {
            methods: vec![EssMethod::Moment, EssMethod::Morita, EssMethod::Elir],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub prior: MixtureSource,
    /// Subjects, or exposure for poisson endpoints.
    pub n: f64,
}

/// A design in configuration form. The first arm is the one whose outcome
/// the success regions describe; a design without `arm2` is one-sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(default)]
    pub lower_tail: bool,
    #[serde(default)]
    pub link: Link,
    pub arm1: ArmConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm2: Option<ArmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

impl DesignConfig {
    /// The same design with every mixture inlined.
    pub fn resolved(&self, stages: &StageMixtures) -> CliResult<DesignConfig> {
        let arm = |a: &ArmConfig| -> CliResult<ArmConfig> {
            Ok(ArmConfig {
                prior: MixtureSource::Inline(a.prior.resolve(stages)?),
                n: a.n,
            })
        };
        Ok(DesignConfig {
            arm1: arm(&self.arm1)?,
            arm2: self.arm2.as_ref().map(arm).transpose()?,
            ..self.clone()
        })
    }

    pub fn build(&self, stages: &StageMixtures) -> CliResult<Design> {
        let prior1 = self.arm1.prior.resolve(stages)?;
        let design = match &self.arm2 {
            None => Design::one_sample(
                DecisionFunction::one_sample(&self.p, &self.q, self.lower_tail)?,
                prior1,
                self.arm1.n,
            )?,
            Some(arm2) => Design::two_sample(
                DecisionFunction::two_sample(&self.p, &self.q, self.lower_tail, self.link)?,
                prior1,
                self.arm1.n,
                arm2.prior.resolve(stages)?,
                arm2.n,
            )?,
        };
        Ok(match self.eps {
            Some(eps) => design.with_eps(eps)?,
            None => design,
        })
    }

    pub(crate) fn rebase(&mut self, dir: &Path) {
        self.arm1.prior.rebase(dir);
        if let Some(a) = &mut self.arm2 {
            a.prior.rebase(dir);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedDesign {
    pub name: String,
    pub design: DesignConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcConfig {
    /// True parameter of the first arm.
    pub theta: Vec<f64>,
    /// True parameter of the second arm; equal to `theta` when absent.
    pub theta2: Option<Vec<f64>>,
}

impl Default for OcConfig {
    fn default() -> Self {
        OcConfig {
            theta: vec![0.25, 0.5, 0.75],
            theta2: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosConfig {
    pub prior1: Option<MixtureSource>,
    pub prior2: Option<MixtureSource>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    /// Report of an earlier `map` run.
    pub analysis: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub family: Option<FamilyName>,
    pub sigma: Option<f64>,
    pub data: Option<PathBuf>,
    pub priors: HyperPriors,
    pub mcmc: McmcConfig,
    pub fit: FitConfig,
    pub robust: RobustConfig,
    pub ess: EssConfig,
    /// Prior used by `robustify`, `ess`, `update` and `predict`.
    pub prior: Option<MixtureSource>,
    pub update: Option<ObservedData>,
    /// Trial size for `predict`.
    pub predict_n: Option<f64>,
    pub design: Option<DesignConfig>,
    /// Designs evaluated by the pipeline.
    pub designs: Vec<NamedDesign>,
    pub oc: OcConfig,
    pub pos: PosConfig,
    pub forest: ForestConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            family: None,
            sigma: None,
            data: None,
            priors: HyperPriors::default(),
            mcmc: McmcConfig::default(),
            fit: FitConfig::default(),
            robust: RobustConfig::default(),
            ess: EssConfig::default(),
            prior: None,
            update: None,
            predict_n: None,
            design: None,
            designs: Vec::new(),
            oc: OcConfig::default(),
            pos: PosConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

fn rebase(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

impl RunConfig {
    /// Read a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.data,
            &mut cfg.fit.draws,
            &mut cfg.forest.analysis,
            &mut cfg.forest.svg,
        ]
        .into_iter()
        .flatten()
        {
            *p = rebase(dir, p);
        }
        for src in [&mut cfg.prior, &mut cfg.pos.prior1, &mut cfg.pos.prior2]
            .into_iter()
            .flatten()
        {
            src.rebase(dir);
        }
        if let Some(d) = &mut cfg.design {
            d.rebase(dir);
        }
        for d in &mut cfg.designs {
            d.design.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.priors.validate()?;
        if self.mcmc.chains == 0 || self.mcmc.iter == 0 {
            return Err(CliError::validation("mcmc needs at least one chain and one kept draw"));
        }
        if self.fit.k_max == 0 || self.fit.k == Some(0) {
            return Err(CliError::validation(
                "the number of mixture components must be at least 1",
            ));
        }
        if self.fit.bins == 0 {
            return Err(CliError::validation("the histogram needs at least one bin"));
        }
        if let Some(w) = self.robust.weight {
            if !(w > 0.0 && w < 1.0) {
                return Err(CliError::validation(format!("robust weight {w} must lie in (0,1)")));
            }
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CliError::validation(format!("sigma must be positive, got {s}")));
            }
        }
        if let Some(t2) = &self.oc.theta2 {
            if t2.len() != self.oc.theta.len() {
                return Err(CliError::validation(format!(
                    "oc.theta2 has {} values but oc.theta has {}",
                    t2.len(),
                    self.oc.theta.len()
                )));
            }
        }
        if self.ess.methods.is_empty() {
            return Err(CliError::validation("at least one ESS method is needed"));
        }
        Ok(())
    }
}
