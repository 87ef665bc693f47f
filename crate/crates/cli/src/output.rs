//! Artifact rendering: long-form CSV, JSON results and the run manifest.
//! Files are written next to their final names and renamed into place only
//! once all of them are complete.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use scorelab_core::prelude::DivergenceValue;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::kde::KdeTable;
use crate::prepare::method_name;
use crate::run::RunResult;

pub const CSV_HEADER: &str = "run_id,step,metric,value";

/// Shortest round-trip representation, in scientific notation so that tiny
/// values stay compact.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn row(out: &mut String, run_id: usize, step: usize, metric: &str, value: f64) {
    let _ = writeln!(out, "{run_id},{step},{metric},{}", format_value(value));
}

fn divergence_metric(d: &DivergenceValue) -> String {
    format!("{}_{}", d.kind.label(), method_name(&d.method))
}

pub fn runs_csv(results: &[RunResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_HEADER}");
    for r in results {
        let id = r.run_id;
        for rec in &r.records {
            row(&mut out, id, rec.step, "censored", rec.censored as f64);
            for d in &rec.divergences {
                row(&mut out, id, rec.step, &divergence_metric(d), d.value);
            }
            for b in &rec.bound_values {
                row(&mut out, id, rec.step, &format!("rhs_{}", b.name), b.rhs);
            }
            if let Some(m) = &rec.moments {
                for (i, v) in m.mean.iter().enumerate() {
                    row(&mut out, id, rec.step, &format!("mean_{i}"), *v);
                }
                for (i, line) in m.cov.iter().enumerate() {
                    for (j, v) in line.iter().enumerate().skip(i) {
                        row(&mut out, id, rec.step, &format!("cov_{i}_{j}"), *v);
                    }
                }
            }
        }
        let last = r.num_steps_k;
        for (key, v) in &r.summary {
            row(&mut out, id, last, key, *v);
        }
        for b in &r.bounds {
            if let Some(v) = b.value {
                row(&mut out, id, last, &format!("rhs_{}", b.label), v);
            }
            if let Some(c) = &b.complexity {
                row(&mut out, id, last, &format!("{}_h", b.label), c.h);
                row(&mut out, id, last, &format!("{}_k", b.label), c.k as f64);
            }
            if let Some(a) = &b.audit {
                let ok = if a.all_satisfied { 1.0 } else { 0.0 };
                row(&mut out, id, last, &format!("audit_{}_satisfied", b.label), ok);
            }
        }
    }
    out
}

/// One block of rows per bandwidth; `step` is the row index.
pub fn kde_csv(table: &KdeTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_HEADER}");
    for (i, r) in table.rows.iter().enumerate() {
        row(&mut out, 0, i, "eta", r.eta);
        row(&mut out, 0, i, "eps2_sq", r.eps2_sq);
        row(&mut out, 0, i, "eps_mgf_sq", r.eps_mgf_sq);
        row(&mut out, 0, i, "eps_mgf_sq_ci", r.ci_halfwidth);
        if let Some(k) = &r.scaling {
            row(&mut out, 0, i, "kde_scaling", k.value);
            row(&mut out, 0, i, "kde_window", k.window);
            row(&mut out, 0, i, "in_window", if k.in_window { 1.0 } else { 0.0 });
        }
    }
    if let Some(s) = table.loglog_slope {
        row(&mut out, 0, table.rows.len(), "loglog_slope", s);
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunCensoring {
    pub run_id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    pub chains: usize,
    pub censored: usize,
    pub censoring_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub code_version: String,
    pub command: String,
    pub started_at: String,
    pub finished_at: String,
    pub elapsed_seconds: f64,
    pub workers: usize,
    pub files: Vec<FileEntry>,
    pub censoring: Vec<RunCensoring>,
}

pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

pub fn artifact_paths(prefix: &str) -> [PathBuf; 3] {
    [
        PathBuf::from(format!("{prefix}.csv")),
        PathBuf::from(format!("{prefix}.json")),
        PathBuf::from(format!("{prefix}.manifest.json")),
    ]
}

fn tmp_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".tmp");
    PathBuf::from(s)
}

/// Writes CSV, JSON and manifest. The manifest's file list is filled in
/// here. Nothing is left behind under a final name if any write fails.
pub fn write_artifacts(prefix: &str, csv: &str, json: &str, manifest: &mut Manifest) -> io::Result<Vec<PathBuf>> {
    let [csv_path, json_path, manifest_path] = artifact_paths(prefix);
    manifest.files = [(&csv_path, csv), (&json_path, json)]
        .iter()
        .map(|(p, body)| FileEntry {
            path: p.display().to_string(),
            bytes: body.len(),
            sha256: hex::encode(Sha256::digest(body.as_bytes())),
        })
        .collect();
    let manifest_text = serde_json::to_string_pretty(manifest).map_err(io::Error::other)? + "\n";
    let plan = [
        (csv_path, csv.to_string()),
        (json_path, json.to_string()),
        (manifest_path, manifest_text),
    ];
    let tmps: Vec<PathBuf> = plan.iter().map(|(p, _)| tmp_path(p)).collect();
    let result = (|| {
        for ((_, body), tmp) in plan.iter().zip(&tmps) {
            fs::write(tmp, body)?;
        }
        for ((path, _), tmp) in plan.iter().zip(&tmps) {
            fs::rename(tmp, path)?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        for tmp in &tmps {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    Ok(plan.into_iter().map(|(p, _)| p).collect())
}
