//! Verification reports and their JSON / CSV serialization.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::stats::{McEstimate, Z_THRESHOLD};
use super::{Experiment, GridPoint};
use crate::error::Result;
use crate::variant::Variant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Excluded,
}

/// The value an estimate is compared with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub label: String,
    pub point: GridPoint,
    /// Formula family the row tests, for variant selection.
    pub formula: Option<String>,
    pub variant: Option<Variant>,
    pub reference: Reference,
    pub estimate: McEstimate,
    pub allowance: f64,
    pub z_score: f64,
    pub verdict: Verdict,
    pub closed_form: Option<f64>,
    /// Largest |z| of the Monte Carlo sides against `closed_form`.
    pub closed_form_z: Option<f64>,
    pub excluded_paths: u64,
    pub note: Option<String>,
}

impl Record {
    /// Verdict from the stored numbers: pass iff |z| ≤ 3.
    pub fn recompute_verdict(&self) -> Verdict {
        if self.verdict == Verdict::Excluded {
            return Verdict::Excluded;
        }
        let z = super::stats::z_score(
            self.estimate.mean,
            self.estimate.stderr,
            self.reference.value,
            self.reference.stderr,
            self.allowance,
        );
        if z.abs() <= Z_THRESHOLD { Verdict::Pass } else { Verdict::Fail }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub experiment: Experiment,
    pub workers: usize,
    pub records: Vec<Record>,
    /// Largest per-row excluded-path count.
    pub excluded_path_count: u64,
    pub simulated_paths: u64,
    /// Over rows that count towards `passed`.
    pub max_abs_z: f64,
    /// No failing row among rows of the selected (or configured) variant.
    pub passed: bool,
    /// Surviving variant per formula family; `None` when undecided.
    pub variant_selection: BTreeMap<String, Option<Variant>>,
    /// Not serialized, so repeated runs produce identical files.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl Report {
    pub fn file_stem(&self) -> String {
        format!("{}.{}.report", self.experiment.name, self.experiment.base_seed)
    }

    pub fn record(&self, label: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.label == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(CsvRow {
                label: &r.label,
                formula: r.formula.as_deref().unwrap_or(""),
                variant: r.variant.map(|v| v.as_str()).unwrap_or(""),
                reference: r.reference.value,
                reference_stderr: r.reference.stderr,
                estimate: r.estimate.mean,
                stderr: r.estimate.stderr,
                count: r.estimate.count,
                allowance: r.allowance,
                z_score: r.z_score,
                verdict: r.verdict,
                closed_form: r.closed_form,
                closed_form_z: r.closed_form_z,
                excluded_paths: r.excluded_paths,
            })
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::error::Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Writes `<name>.<seed>.report.{json,csv}` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let stem = self.file_stem();
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&json, self.to_json()? + "\n")?;
        fs::write(&csv, self.to_csv()?)?;
        Ok((json, csv))
    }
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Numerical(format!("csv: {e}"))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    label: &'a str,
    formula: &'a str,
    variant: &'a str,
    reference: f64,
    reference_stderr: f64,
    estimate: f64,
    stderr: f64,
    count: u64,
    allowance: f64,
    z_score: f64,
    verdict: Verdict,
    closed_form: Option<f64>,
    closed_form_z: Option<f64>,
    excluded_paths: u64,
}

pub const SELECTION_FILE: &str = "variant_selection.json";

/// Merges decided selections of `report` into `dir/variant_selection.json`.
pub fn persist_selection(dir: &Path, report: &Report) -> Result<BTreeMap<String, Variant>> {
    let mut current = load_selection(dir)?;
    for (k, v) in &report.variant_selection {
        if let Some(v) = v {
            current.insert(k.clone(), *v);
        }
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SELECTION_FILE), serde_json::to_string_pretty(&current)? + "\n")?;
    Ok(current)
}

pub fn load_selection(dir: &Path) -> Result<BTreeMap<String, Variant>> {
    let path = dir.join(SELECTION_FILE);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
