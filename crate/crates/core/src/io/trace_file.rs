//! CSV traces with a JSON metadata sidecar.
//!
//! The CSV holds one header row naming every column, then one row per step.
//! Values are written in Rust's shortest round-trip float form, so reading a
//! file back yields bit-identical numbers.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::trace::{ArmSample, SimTrace, TraceRow, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub schema_version: u32,
    pub label: String,
    pub dt: f64,
    pub arm_dofs: Vec<usize>,
    pub aux_names: Vec<String>,
    pub rows: usize,
    /// SHA-256 of the CSV bytes.
    pub data_sha256: String,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub code_version: String,
    /// Seconds since the Unix epoch; the only field that differs between reruns.
    pub created_unix: u64,
}

/// `run/exp1_fic.csv` keeps its metadata in `run/exp1_fic.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn encode_csv(trace: &SimTrace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace.column_names())?;
    let mut values = Vec::new();
    for row in &trace.rows {
        values.clear();
        values.push(row.t);
        for a in &row.arms {
            a.push_values(&mut values);
        }
        values.extend_from_slice(&row.aux);
        w.write_record(values.iter().map(|v| format!("{v:?}")))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Write `trace` to `path` and its sidecar; `config` records provenance.
pub fn write_trace(
    trace: &SimTrace,
    path: impl AsRef<Path>,
    config: Option<&RunConfig>,
) -> Result<TraceMeta> {
    let path = path.as_ref();
    let bytes = encode_csv(trace)?;
    let meta = TraceMeta {
        schema_version: SCHEMA_VERSION,
        label: trace.label.clone(),
        dt: trace.dt,
        arm_dofs: trace.arm_dofs.clone(),
        aux_names: trace.aux_names.clone(),
        rows: trace.len(),
        data_sha256: hex::encode(Sha256::digest(&bytes)),
        config_sha256: config.map(RunConfig::hash),
        seed: config.map(|c| c.seed),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    std::fs::write(path, &bytes)?;
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(meta)
}

pub fn read_meta(path: impl AsRef<Path>) -> Result<TraceMeta> {
    let side = sidecar_path(path.as_ref());
    let meta: TraceMeta = serde_json::from_slice(&std::fs::read(&side)?)?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(Error::TraceFormat(format!(
            "{}: schema version {} is not the supported {SCHEMA_VERSION}",
            side.display(),
            meta.schema_version
        )));
    }
    Ok(meta)
}

/// Exact inverse of [`write_trace`]. A damaged or truncated file is an error, never a partial trace.
pub fn read_trace(path: impl AsRef<Path>) -> Result<SimTrace> {
    let path = path.as_ref();
    let meta = read_meta(path)?;
    let bytes = std::fs::read(path)?;
    if hex::encode(Sha256::digest(&bytes)) != meta.data_sha256 {
        return Err(Error::TraceFormat(format!(
            "{}: content does not match its sidecar checksum",
            path.display()
        )));
    }
    let mut trace = SimTrace {
        label: meta.label.clone(),
        dt: meta.dt,
        arm_dofs: meta.arm_dofs.clone(),
        aux_names: meta.aux_names.clone(),
        rows: Vec::with_capacity(meta.rows),
    };
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != trace.column_names() {
        return Err(Error::TraceFormat(format!(
            "{}: header does not match the sidecar columns",
            path.display()
        )));
    }
    let width = header.len();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::TraceFormat(format!(
                "row {k}: {} fields, expected {width}",
                rec.len()
            )));
        }
        let values = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::TraceFormat(format!("row {k}: {e}")))?;
        let t = values[0];
        if t != trace.time(k) {
            return Err(Error::TraceFormat(format!(
                "row {k}: t = {t} is off the dt grid"
            )));
        }
        let mut at = 1;
        let mut arms = Vec::with_capacity(trace.arm_dofs.len());
        for &dof in &trace.arm_dofs {
            let w = ArmSample::width(dof);
            let a = ArmSample::from_values(dof, &values[at..at + w])
                .ok_or_else(|| Error::TraceFormat(format!("row {k}: bad arm block")))?;
            arms.push(a);
            at += w;
        }
        trace.rows.push(TraceRow {
            t,
            arms,
            aux: values[at..].to_vec(),
        });
    }
    if trace.len() != meta.rows {
        return Err(Error::TraceFormat(format!(
            "{}: {} rows, sidecar says {}",
            path.display(),
            trace.len(),
            meta.rows
        )));
    }
    Ok(trace)
}

/// Read a trace and compare its recorded config hash with `config`.
/// A mismatch is logged as a warning and reported, not treated as an error.
pub fn read_trace_checked(path: impl AsRef<Path>, config: &RunConfig) -> Result<(SimTrace, bool)> {
    let path = path.as_ref();
    let meta = read_meta(path)?;
    let matches = meta.config_sha256.as_deref() == Some(config.hash().as_str());
    if !matches {
        log::warn!(
            "{}: trace was recorded with a different config",
            path.display()
        );
    }
    Ok((read_trace(path)?, matches))
}
