//! Comparison of simulated rows against reference throughput figures.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::experiment::ResultRow;
use crate::Error;

/// Reference CSV row. Any result CSV also parses as a reference.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ReferenceRow {
    pub experiment: String,
    pub memory_model: String,
    pub opts: String,
    pub n_accel: usize,
    pub load_factor: f64,
    pub mlookups_per_s: f64,
}

impl ReferenceRow {
    pub fn key(&self) -> String {
        format!("{}/{}/{}/{}/{:.4}", self.experiment, self.memory_model, self.opts, self.n_accel, self.load_factor)
    }
}

impl From<&ResultRow> for ReferenceRow {
    fn from(r: &ResultRow) -> Self {
        ReferenceRow {
            experiment: r.experiment.clone(),
            memory_model: r.memory_model.clone(),
            opts: r.opts.clone(),
            n_accel: r.n_accel,
            load_factor: r.load_factor,
            mlookups_per_s: r.mlookups_per_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointError {
    pub key: String,
    pub reference: f64,
    pub simulated: f64,
    /// Relative error in percent.
    pub error_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub points: Vec<PointError>,
    pub max_error_pct: f64,
    pub mean_error_pct: f64,
    pub tolerance_pct: f64,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.max_error_pct <= self.tolerance_pct
    }

    pub fn failures(&self) -> impl Iterator<Item = &PointError> {
        self.points.iter().filter(|p| p.error_pct > self.tolerance_pct)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let flag = if p.error_pct > self.tolerance_pct { "FAIL" } else { "ok" };
            out.push_str(&format!("{:<40} ref {:>10.3}  sim {:>10.3}  err {:>6.2}%  {flag}\n", p.key, p.reference, p.simulated, p.error_pct));
        }
        out.push_str(&format!("max error {:.2}%, mean error {:.2}%, tolerance {:.2}%\n", self.max_error_pct, self.mean_error_pct, self.tolerance_pct));
        out
    }
}

pub fn compare_rows(rows: &[ResultRow], reference: &[ReferenceRow], tolerance_pct: f64) -> Result<CompareReport, Error> {
    let sim: BTreeMap<String, &ResultRow> = rows.iter().map(|r| (r.key(), r)).collect();
    let refs: BTreeMap<String, &ReferenceRow> = reference.iter().map(|r| (r.key(), r)).collect();
    let missing: Vec<&String> = refs.keys().filter(|k| !sim.contains_key(*k)).collect();
    let extra: Vec<&String> = sim.keys().filter(|k| !refs.contains_key(*k)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::KeyMismatch(format!("missing from results: {missing:?}; missing from reference: {extra:?}")));
    }
    let points: Vec<PointError> = refs
        .iter()
        .map(|(k, r)| {
            let s = sim[k].mlookups_per_s;
            let error_pct = if r.mlookups_per_s == s { 0.0 } else { (s - r.mlookups_per_s).abs() / r.mlookups_per_s.abs() * 100.0 };
            PointError { key: k.clone(), reference: r.mlookups_per_s, simulated: s, error_pct }
        })
        .collect();
    let max_error_pct = points.iter().map(|p| p.error_pct).fold(0.0, f64::max);
    let mean_error_pct = if points.is_empty() { 0.0 } else { points.iter().map(|p| p.error_pct).sum::<f64>() / points.len() as f64 };
    Ok(CompareReport { points, max_error_pct, mean_error_pct, tolerance_pct })
}

pub fn load_reference(path: &Path) -> Result<Vec<ReferenceRow>, Error> {
    let f = std::fs::File::open(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn compare_reference(rows: &[ResultRow], reference_csv: &Path, tolerance_pct: f64) -> Result<CompareReport, Error> {
    compare_rows(rows, &load_reference(reference_csv)?, tolerance_pct)
}
