//! Reading study tables and draw files.
//!
//! Study tables are CSV files with a header naming one of three layouts:
//! `study,r,n` (binomial), `study,y,se` (normal) or `study,count,exposure`
//! (poisson). Columns may come in any order and extra columns are ignored.
//! Every problem is reported with the 1-based number of the data row.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use mapprior::conjugate::ObservedData;
use mapprior::map_mcmc::{Study, StudyDataset};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Outcome type of a study table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Binomial,
    Normal,
    Poisson,
}

impl DataKind {
    fn columns(self) -> [&'static str; 2] {
        match self {
            DataKind::Binomial => ["r", "n"],
            DataKind::Normal => ["y", "se"],
            DataKind::Poisson => ["count", "exposure"],
        }
    }
}

/// What ingestion learned about a table, recorded in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub kind: DataKind,
    pub studies: usize,
    /// Sum of patients (binomial) or exposure (poisson); absent for normal.
    pub total_size: Option<f64>,
    pub rows: Vec<Study>,
}

impl DatasetSummary {
    pub fn new(kind: DataKind, data: &StudyDataset) -> Self {
        DatasetSummary {
            kind,
            studies: data.len(),
            total_size: data.total_size(),
            rows: data.rows().to_vec(),
        }
    }

    pub fn dataset(&self) -> CliResult<StudyDataset> {
        Ok(StudyDataset::new(self.rows.clone())?)
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn read_studies(path: &Path) -> CliResult<(DataKind, StudyDataset)> {
    parse_studies(open(path)?).map_err(|e| match e {
        CliError::Validation(m) => CliError::validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn count(row: usize, name: &str, raw: &str) -> CliResult<u64> {
    match raw.parse::<i64>() {
        Ok(v) if v >= 0 => Ok(v as u64),
        Ok(v) => Err(CliError::validation(format!(
            "row {row}: {name} must not be negative, got {v}"
        ))),
        Err(_) => Err(CliError::validation(format!(
            "row {row}: {name} must be a non-negative integer, got '{raw}'"
        ))),
    }
}

fn real(row: usize, name: &str, raw: &str) -> CliResult<f64> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::validation(format!(
            "row {row}: {name} must be a finite number, got '{raw}'"
        ))),
    }
}

pub fn parse_studies<R: Read>(input: R) -> CliResult<(DataKind, StudyDataset)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::validation(format!("unreadable header: {e}")))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(CliError::validation(
            "empty file: expected a header such as 'study,r,n'",
        ));
    }
    let col = |name: &str| header.iter().position(|h| h == name);
    let study_col = col("study").ok_or_else(|| CliError::validation("header has no 'study' column"))?;
    let (kind, a_col, b_col) = [DataKind::Binomial, DataKind::Normal, DataKind::Poisson]
        .into_iter()
        .find_map(|k| {
            let [a, b] = k.columns();
            Some((k, col(a)?, col(b)?))
        })
        .ok_or_else(|| {
            CliError::validation(format!(
                "header '{}' matches none of study,r,n / study,y,se / study,count,exposure",
                header.join(",")
            ))
        })?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::validation(format!("row {row}: malformed CSV: {e}")))?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let id = field(study_col).to_string();
        if id.is_empty() {
            return Err(CliError::validation(format!("row {row}: empty study label")));
        }
        let [a_name, b_name] = kind.columns();
        let data = match kind {
            DataKind::Binomial => {
                let r = count(row, a_name, field(a_col))?;
                let n = count(row, b_name, field(b_col))?;
                if n == 0 {
                    return Err(CliError::validation(format!(
                        "row {row} ('{id}'): n must be at least 1"
                    )));
                }
                if r > n {
                    return Err(CliError::validation(format!(
                        "row {row} ('{id}'): r = {r} exceeds n = {n}"
                    )));
                }
                ObservedData::Binomial { r, n }
            }
            DataKind::Normal => {
                let mean = real(row, a_name, field(a_col))?;
                let se = real(row, b_name, field(b_col))?;
                if se <= 0.0 {
                    return Err(CliError::validation(format!(
                        "row {row} ('{id}'): se must be positive, got {se}"
                    )));
                }
                ObservedData::NormalSe { mean, se }
            }
            DataKind::Poisson => {
                let c = count(row, a_name, field(a_col))?;
                let exposure = real(row, b_name, field(b_col))?;
                if exposure <= 0.0 {
                    return Err(CliError::validation(format!(
                        "row {row} ('{id}'): exposure must be positive, got {exposure}"
                    )));
                }
                ObservedData::Poisson { count: c, exposure }
            }
        };
        rows.push(Study { id, data });
    }
    if rows.is_empty() {
        return Err(CliError::validation("the table has a header but no study rows"));
    }
    Ok((kind, StudyDataset::new(rows)?))
}

/// Read a sample of draws: a JSON array of numbers, or a one-column text or
/// CSV file whose first line may be a header.
pub fn read_draws(path: &Path) -> CliResult<Vec<f64>> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| CliError::io(path, e))?;
    parse_draws(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_draws(text: &str) -> CliResult<Vec<f64>> {
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(text)?);
    }
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let first = line.split(',').next().unwrap_or("").trim();
        if first.is_empty() {
            continue;
        }
        match first.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => return Err(CliError::validation(format!("line {}: non-finite draw {v}", i + 1))),
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(CliError::validation(format!(
                    "line {}: '{first}' is not a number",
                    i + 1
                )))
            }
        }
    }
    if values.is_empty() {
        return Err(CliError::validation("no draws found"));
    }
    Ok(values)
}
