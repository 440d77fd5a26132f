//! Command implementations for the `cec` binary.
//!
//! Every command reads one JSON run configuration and exits with 0 on
//! success, 1 when `verify` finds a broken plan, 2 on invalid input, 3 on
//! an infeasible instance, and 4 on an internal invariant violation.
//! Failures print a machine-readable JSON object to stderr.

pub mod config;

pub use config::{load_config, EventConfig, RunConfig, SpeedEntry};

use cec_core::assignment::{
    materialize_rows, plan_from_json, plan_to_docs, plan_to_json, verify_assignment,
    AssignmentError, PlanBlockDoc,
};
use cec_core::codec::CodecError;
use cec_core::frac::format_frac;
use cec_core::optimizer::{optimal_load, OptimizerError};
use cec_core::simulator::{plan_timeline, reports_csv, run_timeline, SimError, StepReport};
use cec_core::FailureClass;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

// ----- errors ---------------------------------------------------------------

/// A command failure: process exit code plus the JSON payload printed to
/// stderr. `stdout` carries any report text produced before the failure.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    pub step: Option<u64>,
    pub stdout: Option<String>,
}

fn class_parts(class: FailureClass) -> (i32, &'static str) {
    match class {
        FailureClass::InvalidInput => (2, "invalid-config"),
        FailureClass::Infeasible => (3, "infeasible"),
        FailureClass::Internal => (4, "internal"),
    }
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        CliError::with_class(FailureClass::InvalidInput, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError::with_class(FailureClass::Internal, message)
    }

    pub fn with_class(class: FailureClass, message: impl Into<String>) -> Self {
        let (code, kind) = class_parts(class);
        CliError {
            code,
            kind,
            message: message.into(),
            step: None,
            stdout: None,
        }
    }

    pub fn at_step(mut self, t: u64) -> Self {
        self.step.get_or_insert(t);
        if !self.message.starts_with("step t=") {
            self.message = format!("step t={t}: {}", self.message);
        }
        self
    }

    pub fn with_context(mut self, context: impl AsRef<str>) -> Self {
        self.message = format!("{}: {}", context.as_ref(), self.message);
        self
    }

    /// The stderr payload.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "message": self.message,
            "step": self.step,
        })
        .to_string()
    }
}

impl From<OptimizerError> for CliError {
    fn from(err: OptimizerError) -> Self {
        CliError::with_class(err.class(), err.to_string())
    }
}

impl From<AssignmentError> for CliError {
    fn from(err: AssignmentError) -> Self {
        CliError::with_class(err.class(), err.to_string())
    }
}

impl From<CodecError> for CliError {
    fn from(err: CodecError) -> Self {
        CliError::with_class(err.class(), err.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        let mut out = CliError::with_class(err.class(), err.to_string());
        out.step = err.step();
        out
    }
}

// ----- run summary document -------------------------------------------------

/// `summary.json`: the resolved configuration plus one record per step,
/// with every fraction rendered exactly as `"num/den"`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    /// Re-running this config reproduces the run byte for byte.
    pub config: RunConfig,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub steps: Vec<StepDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StepDoc {
    pub t: u64,
    pub available: Vec<u32>,
    pub k_star: usize,
    /// Optimal step time.
    pub c_star: String,
    pub loads: Vec<MachineLoadDoc>,
    pub block_count: usize,
    pub rows_per_machine: Vec<MachineRowsDoc>,
    pub decode_verified: bool,
    /// Fraction of (row, machine) pairs retained from the previous step.
    pub overlap: String,
    /// Step time of the reconstructed equal-split baseline.
    pub baseline_reconstructed: String,
    pub blocks: Vec<PlanBlockDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MachineLoadDoc {
    pub machine: u32,
    pub mu: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MachineRowsDoc {
    pub machine: u32,
    pub rows: usize,
}

fn step_doc(report: &StepReport) -> StepDoc {
    StepDoc {
        t: report.t,
        available: report.available.iter().map(|m| m.0).collect(),
        k_star: report.k_star,
        c_star: format_frac(&report.c_star),
        loads: report
            .loads
            .iter()
            .map(|(machine, mu)| MachineLoadDoc {
                machine: machine.0,
                mu: format_frac(mu),
            })
            .collect(),
        block_count: report.block_count,
        rows_per_machine: report
            .rows_per_machine
            .iter()
            .map(|(machine, rows)| MachineRowsDoc {
                machine: machine.0,
                rows: *rows,
            })
            .collect(),
        decode_verified: report.decode_verified,
        overlap: format_frac(&report.overlap),
        baseline_reconstructed: format_frac(&report.baseline_time),
        blocks: plan_to_docs(&report.plan),
    }
}

// ----- commands -------------------------------------------------------------

fn ids_csv(ids: impl IntoIterator<Item = impl std::fmt::Display>) -> String {
    ids.into_iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Prints the optimal load split for every event.
pub fn cmd_optimize(config: &RunConfig) -> Result<String, CliError> {
    let timeline = config.to_timeline(None)?;
    let mut out = String::new();
    for event in &timeline.events {
        let result = optimal_load(&timeline.speeds, &event.available, timeline.split_factor)
            .map_err(|e| CliError::from(e).at_step(event.t))?;
        let mu = result
            .loads
            .iter()
            .map(|(_, mu)| format_frac(mu))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "t={} available=[{}] k_star={} c_star={} mu=[{mu}]",
            event.t,
            ids_csv(event.available.iter()),
            result.k_star,
            format_frac(&result.c_star),
        );
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out_dir(out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        CliError::invalid(format!(
            "cannot create output directory {}: {e}",
            out_dir.display()
        ))
    })
}

/// Writes one materialized plan file per event (`plan_t{t}.json`).
pub fn cmd_assign(config: &RunConfig, out_dir: &Path) -> Result<String, CliError> {
    let timeline = config.to_timeline(None)?;
    let planned = plan_timeline(&timeline)?;
    ensure_out_dir(out_dir)?;
    let mut out = format!("rows={}\n", planned.rows);
    for (event, (result, plan)) in timeline.events.iter().zip(&planned.per_event) {
        let materialized = materialize_rows(plan, planned.rows)
            .map_err(|e| CliError::from(e).at_step(event.t))?;
        let path = out_dir.join(format!("plan_t{}.json", event.t));
        write_file(&path, &plan_to_json(&materialized))?;
        let _ = writeln!(
            out,
            "t={} c_star={} blocks={} file={}",
            event.t,
            format_frac(&result.c_star),
            materialized.blocks().len(),
            path.display(),
        );
    }
    Ok(out)
}

/// Runs the whole timeline and writes `steps.csv` plus `summary.json`.
pub fn cmd_simulate(
    config: &RunConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<String, CliError> {
    let timeline = config.to_timeline(seed_override)?;
    let result = run_timeline(&timeline)?;
    if let Some(report) = result.reports.iter().find(|r| !r.decode_verified) {
        return Err(
            CliError::internal("decoded product does not match the plaintext product")
                .at_step(report.t),
        );
    }
    let summary = RunSummary {
        config: config.resolved(result.rows, result.cols, result.seed),
        rows: result.rows,
        cols: result.cols,
        seed: result.seed,
        steps: result.reports.iter().map(step_doc).collect(),
    };
    ensure_out_dir(out_dir)?;
    let csv_path = out_dir.join("steps.csv");
    write_file(&csv_path, &reports_csv(&result.reports))?;
    let summary_path = out_dir.join("summary.json");
    let summary_text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::internal(format!("summary serialization: {e}")))?;
    write_file(&summary_path, &format!("{summary_text}\n"))?;

    let mut out = format!(
        "rows={} cols={} seed={}\n",
        result.rows, result.cols, result.seed
    );
    for report in &result.reports {
        let _ = writeln!(
            out,
            "t={} N_t={} c_star={} F={} overlap={} baseline_reconstructed={} verified={}",
            report.t,
            report.available.len(),
            format_frac(&report.c_star),
            report.block_count,
            format_frac(&report.overlap),
            format_frac(&report.baseline_time),
            report.decode_verified,
        );
    }
    let _ = writeln!(out, "wrote {}", csv_path.display());
    let _ = writeln!(out, "wrote {}", summary_path.display());
    Ok(out)
}

/// Re-reads the plan files written by `assign` and checks them against
/// the loads the configuration calls for.
pub fn cmd_verify(config: &RunConfig, out_dir: &Path) -> Result<String, CliError> {
    let timeline = config.to_timeline(None)?;
    let planned = plan_timeline(&timeline)?;
    let coded_rows = planned.rows / timeline.split_factor;
    let mut out = String::new();
    let mut checks_run = 0usize;
    let mut first_failed: Option<u64> = None;
    for (event, (result, _)) in timeline.events.iter().zip(&planned.per_event) {
        let path = out_dir.join(format!("plan_t{}.json", event.t));
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::invalid(format!("cannot read plan {}: {e}", path.display()))
        })?;
        let materialized = plan_from_json(&text)
            .map_err(|e| CliError::from(e).with_context(path.display().to_string()))?;
        let _ = writeln!(out, "t={} file={}", event.t, path.display());

        let rows_ok = materialized.coded_rows == coded_rows;
        let _ = writeln!(
            out,
            "  row-count: {}",
            if rows_ok {
                "ok".to_string()
            } else {
                format!(
                    "FAIL (plan covers {} coded rows, run expects {coded_rows})",
                    materialized.coded_rows
                )
            }
        );
        let report = verify_assignment(&materialized, &result.loads);
        for check in &report.checks {
            let _ = writeln!(
                out,
                "  {}: {}",
                check.name,
                if check.pass {
                    "ok".to_string()
                } else {
                    format!("FAIL ({})", check.detail)
                }
            );
        }
        checks_run += 1 + report.checks.len();
        let pass = rows_ok && report.passed();
        if !pass {
            first_failed.get_or_insert(event.t);
        }
        let _ = writeln!(out, "t={} result={}", event.t, if pass { "pass" } else { "FAIL" });
    }
    let passed = first_failed.is_none();
    let _ = writeln!(
        out,
        "verification={} ({} steps, {checks_run} checks)",
        if passed { "pass" } else { "FAIL" },
        timeline.events.len(),
    );
    if passed {
        Ok(out)
    } else {
        let t = first_failed.unwrap();
        Err(CliError {
            code: 1,
            kind: "verification-failed",
            message: format!("step t={t}: plan does not match the configured loads"),
            step: Some(t),
            stdout: Some(out),
        })
    }
}
