//! Command-line arguments. Flags override the matching config fields.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mapprior::conjugate::ObservedData;
use mapprior::ess::EssMethod;

use crate::config::{DesignConfig, FamilyName, MixtureSource, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "mapprior",
    version,
    about = "Meta-analytic-predictive priors and trial design evaluation"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Random seed (MCMC, EM initialisation)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; a directory for `pipeline`. Standard output by default.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// More log output on stderr (repeat for debug messages)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args, Default)]
pub struct FamilyArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyName>,
    /// Sampling standard deviation of a normal endpoint
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct PriorArg {
    /// Mixture JSON file (a report containing a mixture also works)
    #[arg(long)]
    pub prior: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct McmcArgs {
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Kept draws per chain
    #[arg(long)]
    pub iter: Option<usize>,
    /// Include all draws in the report
    #[arg(long)]
    pub keep_draws: bool,
}

#[derive(Debug, Args, Default)]
pub struct DesignArg {
    /// Design JSON file
    #[arg(long)]
    pub design: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the MAP prior of a study table by MCMC
    Map {
        /// CSV with columns study,r,n or study,y,se or study,count,exposure
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        mcmc: McmcArgs,
        /// Write the response-scale MAP draws to this CSV file
        #[arg(long)]
        save_draws: Option<PathBuf>,
    },
    /// Fit a conjugate mixture to a sample of draws by EM
    Fit {
        /// Draws: one number per line (optional header) or a JSON array
        #[arg(long)]
        draws: Option<PathBuf>,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        k_max: Option<usize>,
        /// Fit exactly this many components
        #[arg(long)]
        k: Option<usize>,
    },
    /// Add a vague component to a mixture
    Robustify {
        #[command(flatten)]
        prior: PriorArg,
        #[arg(long)]
        weight: Option<f64>,
        #[arg(long)]
        mean: Option<f64>,
        /// Prior sample size of the vague component
        #[arg(long)]
        n: Option<f64>,
    },
    /// Effective sample size of a mixture
    Ess {
        #[command(flatten)]
        prior: PriorArg,
        #[arg(long, value_parser = parse_method)]
        method: Vec<EssMethod>,
    },
    /// Conjugate posterior of a mixture given trial data
    Update {
        #[command(flatten)]
        prior: PriorArg,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Prior-predictive law of a trial outcome
    Predict {
        #[command(flatten)]
        prior: PriorArg,
        /// Subjects, or exposure for poisson outcomes
        #[arg(long)]
        n: Option<f64>,
    },
    /// Decision boundary of a design
    Boundary {
        #[command(flatten)]
        design: DesignArg,
    },
    /// Operating characteristics of a design
    Oc {
        #[command(flatten)]
        design: DesignArg,
        /// True parameter(s) of the first arm, comma separated
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
        /// True parameter(s) of the second arm; default equal to --theta
        #[arg(long, value_delimiter = ',')]
        theta2: Vec<f64>,
    },
    /// Probability of success of a design
    Pos {
        #[command(flatten)]
        design: DesignArg,
        #[arg(long)]
        prior1: Option<PathBuf>,
        #[arg(long)]
        prior2: Option<PathBuf>,
    },
    /// Forest plot data from a `map` report (or a study table)
    Forest {
        /// Report written by `map`
        #[arg(long)]
        analysis: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        mcmc: McmcArgs,
        /// Also write an SVG drawing here
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run map, fit, robustify, ess, design evaluation and forest in turn
    Pipeline {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        mcmc: McmcArgs,
    },
}

/// Trial data for `update`; which flags are present selects the kind.
#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Responders (binomial)
    #[arg(long)]
    pub r: Option<u64>,
    /// Subjects (binomial, normal) or observations (exponential)
    #[arg(long)]
    pub n: Option<f64>,
    /// Sample mean (normal)
    #[arg(long)]
    pub mean: Option<f64>,
    /// Standard error of the mean (normal)
    #[arg(long)]
    pub se: Option<f64>,
    /// Event count (poisson)
    #[arg(long)]
    pub count: Option<u64>,
    #[arg(long)]
    pub exposure: Option<f64>,
    /// Sum of the observations (exponential)
    #[arg(long)]
    pub total: Option<f64>,
}

fn parse_method(s: &str) -> Result<EssMethod, String> {
    s.parse().map_err(|e: mapprior::Error| e.to_string())
}

fn whole(n: f64, what: &str) -> CliResult<u64> {
    if n >= 0.0 && n.fract() == 0.0 {
        Ok(n as u64)
    } else {
        Err(CliError::validation(format!("{what} must be a whole number, got {n}")))
    }
}

impl DataArgs {
    fn observed(&self) -> CliResult<Option<ObservedData>> {
        let d = self;
        Ok(match (d.r, d.n, d.mean, d.se, d.count, d.exposure, d.total) {
            (None, None, None, None, None, None, None) => None,
            (Some(r), Some(n), None, None, None, None, None) => Some(ObservedData::Binomial {
                r,
                n: whole(n, "--n")?,
            }),
            (None, Some(n), Some(mean), None, None, None, None) => Some(ObservedData::Normal { mean, n }),
            (None, None, Some(mean), Some(se), None, None, None) => Some(ObservedData::NormalSe { mean, se }),
            (None, None, None, None, Some(count), Some(exposure), None) => {
                Some(ObservedData::Poisson { count, exposure })
            }
            (None, Some(n), None, None, None, None, Some(total)) => Some(ObservedData::Exponential {
                n: whole(n, "--n")?,
                total,
            }),
            _ => {
                return Err(CliError::validation(
                    "trial data flags must be one of: --r --n | --mean --n | --mean --se | --count --exposure | --n --total",
                ))
            }
        })
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn file(p: &Option<PathBuf>) -> Option<MixtureSource> {
    p.as_ref().map(|path| MixtureSource::File { path: path.clone() })
}

impl FamilyArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.family, self.family);
        set_opt(&mut cfg.sigma, self.sigma);
    }
}

impl McmcArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.mcmc.chains, self.chains);
        set(&mut cfg.mcmc.warmup, self.warmup);
        set(&mut cfg.mcmc.iter, self.iter);
        cfg.mcmc.keep_draws |= self.keep_draws;
    }
}

impl Cli {
    /// Load the config file (if any), apply the flags and validate.
    pub fn resolve_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, self.global.seed);
        match &self.command {
            Command::Map { data, family, mcmc, .. } => {
                set_opt(&mut cfg.data, data.clone());
                family.apply(&mut cfg);
                mcmc.apply(&mut cfg);
            }
            Command::Fit {
                draws,
                family,
                k_max,
                k,
            } => {
                set_opt(&mut cfg.fit.draws, draws.clone());
                family.apply(&mut cfg);
                set(&mut cfg.fit.k_max, *k_max);
                set_opt(&mut cfg.fit.k, *k);
            }
            Command::Robustify { prior, weight, mean, n } => {
                set_opt(&mut cfg.prior, file(&prior.prior));
                set_opt(&mut cfg.robust.weight, *weight);
                set_opt(&mut cfg.robust.mean, *mean);
                set_opt(&mut cfg.robust.n, *n);
            }
            Command::Ess { prior, method } => {
                set_opt(&mut cfg.prior, file(&prior.prior));
                if !method.is_empty() {
                    cfg.ess.methods = method.clone();
                }
            }
            Command::Update { prior, data } => {
                set_opt(&mut cfg.prior, file(&prior.prior));
                set_opt(&mut cfg.update, data.observed()?);
            }
            Command::Predict { prior, n } => {
                set_opt(&mut cfg.prior, file(&prior.prior));
                set_opt(&mut cfg.predict_n, *n);
            }
            Command::Boundary { design } => self.apply_design(&mut cfg, design)?,
            Command::Oc { design, theta, theta2 } => {
                self.apply_design(&mut cfg, design)?;
                if !theta.is_empty() {
                    cfg.oc.theta = theta.clone();
                    cfg.oc.theta2 = None;
                }
                if !theta2.is_empty() {
                    cfg.oc.theta2 = Some(theta2.clone());
                }
            }
            Command::Pos { design, prior1, prior2 } => {
                self.apply_design(&mut cfg, design)?;
                set_opt(&mut cfg.pos.prior1, file(prior1));
                set_opt(&mut cfg.pos.prior2, file(prior2));
            }
            Command::Forest {
                analysis,
                data,
                family,
                mcmc,
                svg,
            } => {
                mcmc.apply(&mut cfg);
                set_opt(&mut cfg.forest.analysis, analysis.clone());
                set_opt(&mut cfg.data, data.clone());
                family.apply(&mut cfg);
                set_opt(&mut cfg.forest.svg, svg.clone());
            }
            Command::Pipeline { data, mcmc } => {
                set_opt(&mut cfg.data, data.clone());
                mcmc.apply(&mut cfg);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_design(&self, cfg: &mut RunConfig, arg: &DesignArg) -> CliResult<()> {
        if let Some(path) = &arg.design {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let mut design: DesignConfig =
                serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            design.rebase(path.parent().unwrap_or(Path::new("")));
            cfg.design = Some(design);
        }
        Ok(())
    }
}
