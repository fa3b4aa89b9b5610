//! Report types written by the commands, and their CSV renderings.
//!
//! Every report is a [`Report`] pairing the resolved run configuration with
//! the command's result. JSON output is the whole report; CSV output is the
//! main table of the result only.

use mapprior::conjugate::{ObservedData, PredictiveMixture};
use mapprior::design::{Boundary, Region};
use mapprior::em::EmFitResult;
use mapprior::ess::EssMethod;
use mapprior::map_mcmc::{Diagnostics, DrawSummary, ShrinkageRow};
use mapprior::mixture::{MixtureSummary, QuantilePoint};
use mapprior::{Family, Link, Mixture};
use serde::{Deserialize, Serialize};

use crate::config::{DesignConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::forest::ForestPlotData;
use crate::ingest::DatasetSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub config: RunConfig,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn to_json(&self) -> CliResult<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Tabular view of a result.
pub trait ToCsv {
    fn csv(&self) -> CliResult<String>;
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::validation(format!("CSV output: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::validation(format!("CSV output: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields is UTF-8"))
}

fn components_csv(m: &Mixture) -> CliResult<String> {
    table(
        &["component", "w", "a", "b"],
        m.components()
            .iter()
            .enumerate()
            .map(|(i, c)| vec![(i + 1).to_string(), num(c.w), num(c.a), num(c.b)]),
    )
}

/// Full MCMC draws, pooled chain-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawDump {
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    /// Response scale.
    pub theta_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSection {
    pub family: Family,
    pub link: Link,
    pub dataset: DatasetSummary,
    /// MAP prior on the response scale.
    pub theta_star: DrawSummary,
    pub tau: DrawSummary,
    /// Link scale.
    pub mu: DrawSummary,
    pub shrinkage: Vec<ShrinkageRow>,
    pub diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<DrawDump>,
}

impl ToCsv for MapSection {
    fn csv(&self) -> CliResult<String> {
        table(
            &["label", "median", "lower", "upper"],
            self.shrinkage
                .iter()
                .map(|r| vec![r.label.clone(), num(r.median), num(r.lower), num(r.upper)]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Normalised so that the bars integrate to one.
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Histogram {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            hi = lo + 1.0;
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        let total = values.len() as f64 * width;
        Histogram {
            edges: (0..=bins).map(|i| lo + width * i as f64).collect(),
            density: counts.iter().map(|&c| c as f64 / total).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSection {
    /// Where the draws came from.
    pub source: String,
    pub draws: usize,
    pub fit: EmFitResult,
    pub summary: MixtureSummary,
    pub histogram: Histogram,
    /// Fitted density over the range of the draws.
    pub density: Vec<GridPoint>,
}

impl ToCsv for FitSection {
    fn csv(&self) -> CliResult<String> {
        components_csv(&self.fit.mixture)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VagueConvention {
    pub weight: f64,
    pub mean: f64,
    /// Prior sample size of the vague component.
    pub n: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSection {
    pub input: Mixture,
    pub vague: Mixture,
    pub convention: VagueConvention,
    pub robust: Mixture,
    pub summary: MixtureSummary,
}

impl ToCsv for RobustSection {
    fn csv(&self) -> CliResult<String> {
        components_csv(&self.robust)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssRow {
    pub method: EssMethod,
    /// `None` when the ESS is infinite.
    pub value: Option<f64>,
    pub diverges: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_point: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn ess_rows_csv(prefix: Option<&str>, rows: &[EssRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut v = Vec::new();
            if let Some(p) = prefix {
                v.push(p.to_string());
            }
            v.extend([
                serde_json::to_value(r.method)
                    .ok()
                    .and_then(|m| m.as_str().map(str::to_string))
                    .unwrap_or_default(),
                opt(r.value),
                r.diverges.to_string(),
            ]);
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssSection {
    pub prior: Mixture,
    pub ess: Vec<EssRow>,
}

impl ToCsv for EssSection {
    fn csv(&self) -> CliResult<String> {
        table(&["method", "ess", "diverges"], ess_rows_csv(None, &self.ess))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateSection {
    pub prior: Mixture,
    pub data: ObservedData,
    pub posterior: Mixture,
    pub summary: MixtureSummary,
}

impl ToCsv for UpdateSection {
    fn csv(&self) -> CliResult<String> {
        components_csv(&self.posterior)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmfRow {
    pub y: u64,
    pub pmf: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictSection {
    pub prior: Mixture,
    pub n: f64,
    pub predictive: PredictiveMixture,
    pub mean: f64,
    /// Probabilities of the counts (binomial and poisson outcomes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<PmfRow>,
    /// Quantiles of the sample mean (normal outcomes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quantiles: Vec<QuantilePoint>,
}

impl ToCsv for PredictSection {
    fn csv(&self) -> CliResult<String> {
        if self.table.is_empty() {
            table(
                &["p", "value"],
                self.quantiles.iter().map(|q| vec![num(q.p), num(q.value)]),
            )
        } else {
            table(
                &["y", "pmf", "cdf"],
                self.table.iter().map(|r| vec![r.y.to_string(), num(r.pmf), num(r.cdf)]),
            )
        }
    }
}

fn region_cells(r: &Region) -> [String; 3] {
    match r {
        Region::Empty => ["empty".into(), String::new(), String::new()],
        Region::Full => ["full".into(), String::new(), String::new()],
        Region::Threshold { critical, above } => [
            "threshold".into(),
            num(*critical),
            if *above { "above" } else { "below" }.into(),
        ],
        Region::Set { outcomes } => [
            "set".into(),
            outcomes.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
            String::new(),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySection {
    pub design: DesignConfig,
    pub boundary: Boundary,
}

impl ToCsv for BoundarySection {
    fn csv(&self) -> CliResult<String> {
        let header = ["y2", "region", "critical", "direction"];
        match &self.boundary {
            Boundary::OneSample { region } => {
                let [a, b, c] = region_cells(region);
                table(&header, [vec![String::new(), a, b, c]])
            }
            Boundary::TwoSample { rows, .. } => table(
                &header,
                rows.iter().map(|r| {
                    let [a, b, c] = region_cells(&r.region);
                    vec![num(r.y2), a, b, c]
                }),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcRow {
    pub theta1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta2: Option<f64>,
    pub oc: f64,
}

fn oc_rows_csv(prefix: Option<&str>, rows: &[OcRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut v: Vec<String> = prefix.map(str::to_string).into_iter().collect();
            v.extend([num(r.theta1), opt(r.theta2), num(r.oc)]);
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSection {
    pub design: DesignConfig,
    pub oc: Vec<OcRow>,
}

impl ToCsv for OcSection {
    fn csv(&self) -> CliResult<String> {
        table(&["theta1", "theta2", "oc"], oc_rows_csv(None, &self.oc))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosSection {
    pub design: DesignConfig,
    pub prior1: Mixture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior2: Option<Mixture>,
    pub pos: f64,
}

impl ToCsv for PosSection {
    fn csv(&self) -> CliResult<String> {
        table(&["pos"], [vec![num(self.pos)]])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSection {
    pub forest: ForestPlotData,
}

impl ToCsv for ForestSection {
    fn csv(&self) -> CliResult<String> {
        table(
            &[
                "label",
                "kind",
                "estimate",
                "ci_lower",
                "ci_upper",
                "shrinkage_median",
                "cri_lower",
                "cri_upper",
            ],
            self.forest.rows.iter().map(|r| {
                vec![
                    r.label.clone(),
                    serde_json::to_value(r.kind)
                        .ok()
                        .and_then(|k| k.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    opt(r.estimate),
                    opt(r.ci.map(|c| c.lower)),
                    opt(r.ci.map(|c| c.upper)),
                    num(r.shrinkage_median),
                    num(r.cri.lower),
                    num(r.cri.upper),
                ]
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutcome {
    pub name: String,
    pub design: DesignConfig,
    pub oc: Vec<OcRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEss {
    pub map: Vec<EssRow>,
    pub robust: Vec<EssRow>,
}

/// Everything the pipeline produced, in stage order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSection {
    pub map: MapSection,
    pub fit: FitSection,
    pub robust: RobustSection,
    pub ess: PipelineEss,
    pub designs: Vec<DesignOutcome>,
    pub forest: ForestPlotData,
}

impl ToCsv for PipelineSection {
    /// The OC tables of all designs.
    fn csv(&self) -> CliResult<String> {
        table(
            &["design", "theta1", "theta2", "oc"],
            self.designs.iter().flat_map(|d| oc_rows_csv(Some(&d.name), &d.oc)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_integrates_to_one() {
        let h = Histogram::new(&[0.1, 0.2, 0.2, 0.3, 0.9], 4);
        let area: f64 = h
            .density
            .iter()
            .zip(h.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum();
        assert!((area - 1.0).abs() < 1e-12);
        assert_eq!(h.edges.len(), 5);
    }

    #[test]
    fn csv_tables() {
        let s = OcSection {
            design: serde_json::from_str(
                r#"{"p":[0.9],"q":[0.5],"arm1":{"prior":{"family":"beta","components":[[1,1,1]]},"n":10}}"#,
            )
            .unwrap(),
            oc: vec![OcRow {
                theta1: 0.5,
                theta2: None,
                oc: 0.25,
            }],
        };
        assert_eq!(s.csv().unwrap(), "theta1,theta2,oc\n0.5,,0.25\n");
    }
}
