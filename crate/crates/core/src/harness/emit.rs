use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{OutputFormat, OutputTarget};
use crate::error::{MinfoError, Result};

pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "method",
    "k",
    "rho",
    "f",
    "sigma",
    "estimate_nats",
    "truth_nats",
    "abs_err",
    "seed",
    "wall_ms",
];

/// One result line. `None` fields are written empty (CSV) or `null` (JSON).
/// A row whose `estimate_nats` is `None` records a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub k: Option<usize>,
    pub rho: Option<f64>,
    pub f: Option<String>,
    pub sigma: Option<f64>,
    pub estimate_nats: Option<f64>,
    pub truth_nats: Option<f64>,
    pub abs_err: Option<f64>,
    pub seed: u64,
    pub wall_ms: Option<u64>,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.estimate_nats.is_none()
    }
}

fn fmt_f(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_fields(row: &ResultRow) -> [String; 11] {
    [
        row.experiment.clone(),
        row.method.clone(),
        row.k.map(|k| k.to_string()).unwrap_or_default(),
        fmt_f(row.rho),
        row.f.clone().unwrap_or_default(),
        fmt_f(row.sigma),
        fmt_f(row.estimate_nats),
        fmt_f(row.truth_nats),
        fmt_f(row.abs_err),
        row.seed.to_string(),
        row.wall_ms.map(|w| w.to_string()).unwrap_or_default(),
    ]
}

/// Serializes rows into bytes in the chosen format.
pub fn render(rows: &[ResultRow], format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| MinfoError::Io(e.to_string());
            w.write_record(CSV_HEADER).map_err(io)?;
            for row in rows {
                w.write_record(csv_fields(row)).map_err(io)?;
            }
            w.into_inner().map_err(|e| MinfoError::Io(e.to_string()))
        }
        OutputFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(rows).map_err(|e| MinfoError::Io(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

/// Writes `bytes` to the target. Unwritable paths are configuration errors.
pub fn write_output(bytes: &[u8], target: &OutputTarget) -> Result<()> {
    match target {
        OutputTarget::Stdout => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
        OutputTarget::File(path) => std::fs::write(path, bytes).map_err(|e| {
            MinfoError::config("out", format!("cannot write {}: {e}", path.display()))
        }),
    }
}

pub fn emit(rows: &[ResultRow], format: OutputFormat, target: &OutputTarget) -> Result<()> {
    write_output(&render(rows, format)?, target)
}

/// Parses rows written by [`render`] in JSON form.
pub fn parse_json_rows(bytes: &[u8]) -> Result<Vec<ResultRow>> {
    serde_json::from_slice(bytes).map_err(|e| MinfoError::config("rows", e.to_string()))
}
