//! On-disk formats: per-iteration CSV logs and run-level JSON reports.
//!
//! The CSV leaves out wall-clock columns so that two runs with the same seed
//! and configuration produce identical bytes; timings live in the JSON report.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::alm::{IterationRecord, RunReport};
use crate::error::{Error, Result};

/// Column order of the iteration CSV.
pub const ITERATION_COLUMNS: [&str; 17] = [
    "k",
    "grad_norm",
    "v_max",
    "rho",
    "active_count",
    "shell",
    "eps_k",
    "scale",
    "inner_iterations",
    "inner_failed",
    "objective",
    "stationarity",
    "complementarity",
    "mu_norm",
    "mu_hat_norm",
    "identity_residual",
    "nnqp_unconverged",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub k: usize,
    pub grad_norm: f64,
    pub v_max: f64,
    pub rho: f64,
    pub active_count: usize,
    pub shell: Option<usize>,
    pub eps_k: f64,
    pub scale: f64,
    pub inner_iterations: usize,
    pub inner_failed: bool,
    pub objective: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub mu_norm: f64,
    pub mu_hat_norm: f64,
    pub identity_residual: f64,
    pub nnqp_unconverged: usize,
}

impl From<&IterationRecord> for IterationRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            k: r.k,
            grad_norm: r.grad_norm,
            v_max: r.v_max,
            rho: r.rho,
            active_count: r.active_count,
            shell: r.shell,
            eps_k: r.eps_k,
            scale: r.scale,
            inner_iterations: r.inner_iterations,
            inner_failed: r.inner_failed,
            objective: r.objective,
            stationarity: r.stationarity,
            complementarity: r.complementarity,
            mu_norm: r.mu_norm,
            mu_hat_norm: r.mu_hat_norm,
            identity_residual: r.identity_residual,
            nnqp_unconverged: r.nnqp_unconverged,
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_iterations<W: Write>(records: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(IterationRow::from(r)).map_err(csv_error)?;
    }
    if records.is_empty() {
        w.write_record(ITERATION_COLUMNS).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn iterations_csv(records: &[IterationRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_iterations(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_iterations<R: Read>(input: R) -> Result<Vec<IterationRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(ITERATION_COLUMNS) {
        return Err(Error::Io(format!("unexpected iteration columns: {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))
    }
}
