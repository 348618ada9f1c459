//! Deterministic report emission: CSV with a fixed column order and fixed
//! float formatting, JSON with a schema version, and a run manifest that
//! echoes the parsed config so any run can be re-created bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::flow::FlowTrace;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), ReportError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Fixed flow-trace schema.
pub const TRACE_HEADER: [&str; 9] = [
    "t",
    "dt",
    "sup_residual",
    "min_residual",
    "kappa_min",
    "kappa_max",
    "vtilde_max",
    "volume",
    "cone_margin",
];

/// IMCF variant: the volume-law deviation column follows dt.
pub const IMCF_TRACE_HEADER: [&str; 10] = [
    "t",
    "dt",
    "volume",
    "volume_law_error",
    "sup_residual",
    "min_residual",
    "kappa_min",
    "kappa_max",
    "vtilde_max",
    "cone_margin",
];

pub fn write_trace(path: &Path, trace: &FlowTrace) -> Result<(), ReportError> {
    let rows: Vec<Vec<f64>> = trace
        .rows
        .iter()
        .map(|r| {
            vec![
                r.t,
                r.dt,
                r.sup_residual,
                r.min_residual,
                r.kappa_min,
                r.kappa_max,
                r.vtilde_max,
                r.volume,
                r.cone_margin,
            ]
        })
        .collect();
    write_csv(path, &TRACE_HEADER, &rows)
}

pub fn write_imcf_trace(path: &Path, trace: &FlowTrace) -> Result<(), ReportError> {
    let rows: Vec<Vec<f64>> = trace
        .rows
        .iter()
        .map(|r| {
            vec![
                r.t,
                r.dt,
                r.volume,
                r.volume_law_error.unwrap_or(f64::NAN),
                r.sup_residual,
                r.min_residual,
                r.kappa_min,
                r.kappa_max,
                r.vtilde_max,
                r.cone_margin,
            ]
        })
        .collect();
    write_csv(path, &IMCF_TRACE_HEADER, &rows)
}

/// Two-column plot data for an external plotter.
pub fn write_plot(path: &Path, trace: &FlowTrace, monitor: &str) -> Result<(), ReportError> {
    let pick = |r: &crate::flow::TraceRow| -> f64 {
        match monitor {
            "dt" => r.dt,
            "sup_residual" => r.sup_residual,
            "min_residual" => r.min_residual,
            "kappa_min" => r.kappa_min,
            "kappa_max" => r.kappa_max,
            "vtilde_max" => r.vtilde_max,
            "volume" => r.volume,
            "cone_margin" => r.cone_margin,
            "volume_law_error" => r.volume_law_error.unwrap_or(f64::NAN),
            _ => f64::NAN,
        }
    };
    let mut out = String::new();
    for r in &trace.rows {
        out.push_str(&format!("{} {}\n", fmt(r.t), fmt(pick(r))));
    }
    write_text(path, &out)
}

pub fn known_monitor(name: &str) -> bool {
    matches!(
        name,
        "dt" | "sup_residual"
            | "min_residual"
            | "kappa_min"
            | "kappa_max"
            | "vtilde_max"
            | "volume"
            | "cone_margin"
            | "volume_law_error"
    )
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub schema_version: u32,
    pub crate_version: &'static str,
    pub command: crate::config::Command,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub config: &'a ExperimentConfig,
}

pub fn write_manifest(
    path: &Path,
    cfg: &ExperimentConfig,
    outputs: Vec<String>,
) -> Result<(), ReportError> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION"),
        command: cfg.command,
        seed: cfg.seed(),
        outputs,
        config: cfg,
    };
    write_json(path, &manifest)
}

/// Serialized final state.
#[derive(Serialize, serde::Deserialize)]
pub struct StateOut {
    pub schema_version: u32,
    pub model_id: String,
    pub topology: crate::grid::Topology,
    pub resolution: [usize; 2],
    pub order: u32,
    pub t: f64,
    pub u: Vec<f64>,
}

pub fn state_out(state: &crate::geometry::GraphState) -> StateOut {
    let grid = state.grid();
    StateOut {
        schema_version: SCHEMA_VERSION,
        model_id: state.model.model_id().to_string(),
        topology: grid.topology(),
        resolution: grid.resolution(),
        order: grid.order().as_u32(),
        t: state.t,
        u: state.u.values().to_vec(),
    }
}

/// Pretty JSON with a trailing newline (the byte layout all JSON outputs
/// share).
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting_fixed_width() {
        let dir = std::env::temp_dir().join("curvflow_report_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("x.csv");
        write_csv(
            &path,
            &["a", "b"],
            &[vec![1.0, f64::INFINITY], vec![0.5, -2.0]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("a,b\n"));
        assert!(text.contains("1.0000000000000000e0,inf"));
        let _ = std::fs::remove_dir_all(&dir);
    }
}
