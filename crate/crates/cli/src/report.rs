use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use waylab::bounds::BoundReport;
use waylab::sampling::PRNG_ALGORITHM;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Violation,
}

/// Run-specific metadata. Everything that may differ between two runs with
/// the same config and seed lives here and nowhere else.
#[derive(Debug, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub prng: &'static str,
    pub timestamp_unix: u64,
    pub wall_time_s: f64,
}

impl Header {
    pub fn new(wall_time_s: f64) -> Self {
        Self {
            tool: "waylab",
            version: env!("CARGO_PKG_VERSION"),
            prng: PRNG_ALGORITHM,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_time_s,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub header: Header,
    pub command: &'static str,
    pub parameters: Value,
    pub status: Outcome,
    pub summary: Value,
    /// Sorted by digest, then relation, so the order never depends on how
    /// the work was scheduled.
    pub records: Vec<BoundReport>,
}

impl Report {
    pub fn new(
        command: &'static str,
        parameters: Value,
        status: Outcome,
        summary: Value,
        mut records: Vec<BoundReport>,
        wall_time_s: f64,
    ) -> Self {
        records.sort_by(|a, b| {
            a.digest
                .cmp(&b.digest)
                .then(a.relation.cmp(&b.relation))
                .then(a.slack.total_cmp(&b.slack))
        });
        Self {
            schema: SCHEMA_VERSION,
            header: Header::new(wall_time_s),
            command,
            parameters,
            status,
            summary,
            records,
        }
    }

    /// Writes the JSON report to `out` (stdout when `None`) and, when the
    /// report has records and `out` is a file, their CSV export next to it.
    pub fn write(&self, out: Option<&Path>) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        match out {
            None => {
                let mut stdout = std::io::stdout().lock();
                writeln!(stdout, "{json}")?;
            }
            Some(path) => {
                std::fs::write(path, json + "\n")?;
                if !self.records.is_empty() {
                    let mut w = csv::Writer::from_path(csv_path(path, ""))?;
                    for r in &self.records {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                }
            }
        }
        Ok(())
    }
}

/// `report.json` -> `report<suffix>.csv`.
pub fn csv_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}{suffix}.csv"))
}

pub fn min_slack<'a>(records: impl IntoIterator<Item = &'a BoundReport>) -> Option<f64> {
    records
        .into_iter()
        .filter(|r| !r.relation.is_identity())
        .map(|r| r.slack)
        .min_by(f64::total_cmp)
}

pub fn max_residual<'a>(records: impl IntoIterator<Item = &'a BoundReport>) -> Option<f64> {
    records
        .into_iter()
        .filter(|r| r.relation.is_identity())
        .map(|r| r.slack)
        .max_by(f64::total_cmp)
}
