//! Experiment harness behind the `lab` binary: JSON configs in, long-form
//! CSV, JSON results and a manifest out.

pub mod config;
pub mod kde;
pub mod output;
pub mod prepare;
pub mod run;

use std::path::PathBuf;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use rayon::prelude::*;
use serde_json::json;

pub use config::ExperimentConfig;
pub use prepare::{has_errors, prepare, validate, Diagnostic, Severity};
pub use run::RunResult;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Run,
    Validate,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Validate => "validate",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub diagnostics: Vec<Diagnostic>,
    pub files: Vec<PathBuf>,
    /// One-line summary for the terminal.
    pub message: String,
}

impl Outcome {
    fn invalid(diagnostics: Vec<Diagnostic>) -> Self {
        let n = diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
        Self {
            exit_code: EXIT_INVALID,
            diagnostics,
            files: Vec::new(),
            message: format!("config invalid: {n} error(s)"),
        }
    }

    fn failed(diagnostics: Vec<Diagnostic>, msg: String) -> Self {
        Self {
            exit_code: EXIT_FAILURE,
            diagnostics,
            files: Vec::new(),
            message: msg,
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Runs a command on config text. `workers` is recorded in the manifest;
/// the caller owns the thread pool.
pub fn execute(command: Command, config_text: &str, workers: usize) -> Outcome {
    let config = match ExperimentConfig::parse(config_text) {
        Ok(c) => c,
        Err(e) => return Outcome::invalid(vec![Diagnostic::error("config", e.to_string())]),
    };
    let started_at = now();
    let clock = Instant::now();

    let mut diagnostics = Vec::new();
    let (csv, doc, runs) = match command {
        Command::Validate => {
            let diags = validate(&config);
            if has_errors(&diags) {
                return Outcome::invalid(diags);
            }
            let n = diags.len();
            return Outcome {
                exit_code: EXIT_OK,
                diagnostics: diags,
                files: Vec::new(),
                message: format!("config valid ({n} warning(s))"),
            };
        }
        Command::Run => {
            let mut base = config.clone();
            if base.sweep.take().is_some() {
                diagnostics.push(Diagnostic::warning("sweep", "ignored by `lab run`; use `lab sweep`"));
            }
            let (prepared, diags) = prepare(&base);
            diagnostics.extend(diags);
            let Some(prepared) = prepared.filter(|_| !has_errors(&diagnostics)) else {
                return Outcome::invalid(diagnostics);
            };
            match run::execute(&prepared, 0, None) {
                Ok(r) => {
                    let runs = vec![r];
                    (output::runs_csv(&runs), json!({ "runs": runs }), runs)
                }
                Err(e) => return Outcome::failed(diagnostics, format!("run failed: {e}")),
            }
        }
        Command::Sweep => {
            let Some(sweep) = config.sweep.clone() else {
                return Outcome::invalid(vec![Diagnostic::error("sweep", "`lab sweep` needs a sweep section")]);
            };
            let diags = validate(&config);
            let invalid = has_errors(&diags);
            diagnostics.extend(diags);
            if invalid || sweep.values.is_empty() {
                return Outcome::invalid(diagnostics);
            }
            if sweep.parameter == "eta" {
                match kde::bandwidth_table(&config, &sweep.values) {
                    Ok(t) => (output::kde_csv(&t), json!({ "kde_bandwidth": t }), Vec::new()),
                    Err(e) => return Outcome::failed(diagnostics, format!("sweep failed: {e}")),
                }
            } else {
                let results: Result<Vec<RunResult>, String> = sweep
                    .values
                    .par_iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let c = config.with_parameter(&sweep.parameter, v)?;
                        let p = prepare(&c)
                            .0
                            .ok_or_else(|| format!("sweep point {v} did not prepare"))?;
                        let point = run::SweepPoint {
                            parameter: sweep.parameter.clone(),
                            value: v,
                        };
                        run::execute(&p, i, Some(point)).map_err(|e| format!("sweep point {v}: {e}"))
                    })
                    .collect();
                match results {
                    Ok(runs) => (output::runs_csv(&runs), json!({ "runs": runs }), runs),
                    Err(e) => return Outcome::failed(diagnostics, e),
                }
            }
        }
    };

    let mut doc = doc;
    doc["config_hash"] = json!(config.hash());
    doc["config"] = serde_json::from_str(&config.canonical_json()).expect("canonical JSON parses");
    doc["diagnostics"] = json!(diagnostics);
    let json_text = serde_json::to_string_pretty(&doc).expect("results serialize") + "\n";

    let mut manifest = output::Manifest {
        config_hash: config.hash(),
        code_version: output::code_version(),
        command: command.name().into(),
        started_at,
        finished_at: now(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        workers,
        files: Vec::new(),
        censoring: runs
            .iter()
            .map(|r| output::RunCensoring {
                run_id: r.run_id,
                sweep_value: r.sweep.as_ref().map(|s| s.value),
                chains: r.chains,
                censored: r.censored,
                censoring_fraction: r.censoring_fraction,
            })
            .collect(),
    };
    let files = match output::write_artifacts(&config.output, &csv, &json_text, &mut manifest) {
        Ok(f) => f,
        Err(e) => return Outcome::failed(diagnostics, format!("writing outputs: {e}")),
    };

    let diverged: Vec<usize> = runs.iter().filter(|r| r.all_diverged).map(|r| r.run_id).collect();
    let (exit_code, message) = if diverged.is_empty() {
        (
            EXIT_OK,
            format!("{} run(s) written to {}.*", runs.len().max(1), config.output),
        )
    } else {
        (EXIT_DIVERGED, format!("every chain diverged in run(s) {diverged:?}"))
    };
    Outcome {
        exit_code,
        diagnostics,
        files,
        message,
    }
}
