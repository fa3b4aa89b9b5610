//! Forest plot data: raw per-study estimates with 95% confidence intervals
//! next to the model's shrinkage estimates, plus a plain SVG rendering.

use std::fmt::Write as _;

use mapprior::conjugate::ObservedData;
use mapprior::map_mcmc::{ShrinkageRow, Study};
use mapprior::numerics::special::norm_quantile;
use mapprior::{GammaLikelihood, Mixture};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

const LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Study,
    Typical,
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub label: String,
    pub kind: RowKind,
    /// Raw estimate of the study; absent for the model rows.
    pub estimate: Option<f64>,
    pub ci: Option<Interval>,
    pub shrinkage_median: f64,
    pub cri: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestPlotData {
    /// "clopper-pearson", "wald" or "exact-poisson".
    pub ci_method: String,
    pub level: f64,
    pub rows: Vec<ForestRow>,
}

/// Exact binomial interval from beta quantiles.
pub fn clopper_pearson(r: u64, n: u64, level: f64) -> CliResult<Interval> {
    let alpha = 1.0 - level;
    let (rf, nf) = (r as f64, n as f64);
    let lower = if r == 0 {
        0.0
    } else {
        Mixture::beta(&[(1.0, rf, nf - rf + 1.0)])?.quantile(alpha / 2.0)?
    };
    let upper = if r == n {
        1.0
    } else {
        Mixture::beta(&[(1.0, rf + 1.0, nf - rf)])?.quantile(1.0 - alpha / 2.0)?
    };
    Ok(Interval { lower, upper })
}

/// Exact interval for a poisson rate from gamma quantiles.
pub fn poisson_exact(count: u64, exposure: f64, level: f64) -> CliResult<Interval> {
    let alpha = 1.0 - level;
    let c = count as f64;
    let gamma = |shape: f64| Mixture::gamma(GammaLikelihood::Poisson, &[(1.0, shape, exposure)]);
    let lower = if count == 0 {
        0.0
    } else {
        gamma(c)?.quantile(alpha / 2.0)?
    };
    let upper = gamma(c + 1.0)?.quantile(1.0 - alpha / 2.0)?;
    Ok(Interval { lower, upper })
}

pub fn wald(y: f64, se: f64, level: f64) -> Interval {
    let z = norm_quantile(0.5 + level / 2.0);
    Interval {
        lower: y - z * se,
        upper: y + z * se,
    }
}

fn raw(data: &ObservedData) -> CliResult<(f64, Interval, &'static str)> {
    match *data {
        ObservedData::Binomial { r, n } => Ok((r as f64 / n as f64, clopper_pearson(r, n, LEVEL)?, "clopper-pearson")),
        ObservedData::NormalSe { mean, se } => Ok((mean, wald(mean, se, LEVEL), "wald")),
        ObservedData::Poisson { count, exposure } => Ok((
            count as f64 / exposure,
            poisson_exact(count, exposure, LEVEL)?,
            "exact-poisson",
        )),
        ref other => Err(CliError::validation(format!("no forest interval for {other:?}"))),
    }
}

/// Combine the studies with the shrinkage rows of the same analysis: one row
/// per study in input order, then the typical and MAP rows.
pub fn forest_data(studies: &[Study], shrinkage: &[ShrinkageRow]) -> CliResult<ForestPlotData> {
    if shrinkage.len() != studies.len() + 2 {
        return Err(CliError::validation(format!(
            "analysis has {} shrinkage rows for {} studies",
            shrinkage.len(),
            studies.len()
        )));
    }
    let mut method = "";
    let mut rows = Vec::with_capacity(shrinkage.len());
    for (study, s) in studies.iter().zip(shrinkage) {
        let (estimate, ci, m) = raw(&study.data)?;
        method = m;
        rows.push(ForestRow {
            label: study.id.clone(),
            kind: RowKind::Study,
            estimate: Some(estimate),
            ci: Some(ci),
            shrinkage_median: s.median,
            cri: Interval {
                lower: s.lower,
                upper: s.upper,
            },
        });
    }
    for (s, kind) in shrinkage[studies.len()..].iter().zip([RowKind::Typical, RowKind::Map]) {
        rows.push(ForestRow {
            label: s.label.clone(),
            kind,
            estimate: None,
            ci: None,
            shrinkage_median: s.median,
            cri: Interval {
                lower: s.lower,
                upper: s.upper,
            },
        });
    }
    Ok(ForestPlotData {
        ci_method: method.to_string(),
        level: LEVEL,
        rows,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static SVG: one line per row, a light dot and segment for the raw
/// estimate and a dark dot and segment for the shrinkage estimate.
pub fn render_svg(data: &ForestPlotData) -> String {
    let (width, left, right, top, step) = (640.0, 120.0, 40.0, 30.0, 26.0);
    let height = top * 2.0 + step * data.rows.len() as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in &data.rows {
        for iv in r.ci.iter().chain(std::iter::once(&r.cri)) {
            lo = lo.min(iv.lower);
            hi = hi.max(iv.upper);
        }
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |v: f64| left + (v - lo) / (hi - lo) * (width - left - right);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let axis_y = height - top + 6.0;
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{axis_y}" x2="{:.2}" y2="{axis_y}" stroke="#000000"/>"##,
        width - right
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.3}</text>"##,
            x(v),
            axis_y + 16.0
        );
    }
    for (i, r) in data.rows.iter().enumerate() {
        let y = top + step * (i as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="8" y="{:.2}">{}</text>"#, y + 4.0, escape(&r.label));
        if let (Some(e), Some(ci)) = (r.estimate, r.ci) {
            let yr = y - 5.0;
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{yr:.2}" x2="{:.2}" y2="{yr:.2}" stroke="#9e9e9e" stroke-width="2"/>"##,
                x(ci.lower),
                x(ci.upper)
            );
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{yr:.2}" r="3.5" fill="#bdbdbd"/>"##, x(e));
        }
        let ys = y + 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{ys:.2}" x2="{:.2}" y2="{ys:.2}" stroke="#1f3b73" stroke-width="2"/>"##,
            x(r.cri.lower),
            x(r.cri.upper)
        );
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{ys:.2}" r="3.5" fill="#1f3b73"/>"##,
            x(r.shrinkage_median)
        );
    }
    s.push_str("</svg>\n");
    s
}
