//! Meta-analytic-predictive (MAP) priors for clinical trial design.
//!
//! The crate covers the full workflow: a random-effects meta-analysis of
//! historical studies sampled by MCMC ([`map_mcmc`]), approximation of the
//! resulting predictive sample by a conjugate parametric mixture via EM
//! ([`em`]), robustification and conjugate updating ([`mixture`],
//! [`conjugate`]), effective sample size ([`ess`]) and evaluation of one- and
//! two-sample trial designs ([`design`]).

pub mod conjugate;
pub mod design;
pub mod em;
pub mod error;
pub mod ess;
pub mod map_mcmc;
pub mod mixture;
pub mod numerics;

pub use error::{Error, Result};
pub use mixture::{Family, GammaLikelihood, Link, Mixture};
