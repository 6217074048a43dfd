//! Batch subcommands: run, compare, audit.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ific::baselines::ControllerKind;
use ific::config::{parse_config, RunConfig};
use ific::passivity::{passivity_audit, AuditReport, Violation};
use ific::scenarios::{compute_metrics, run_with, MetricsReport, Trace};
use ific::trace::{read_sidecar, read_trace, trace_hash, write_trace, TraceRecord, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DIVERGED: u8 = 2;
pub const EXIT_AUDIT: u8 = 3;

pub fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    parse_config(path).with_context(|| format!("config {}", path.display()))
}

/// Audit figures without the per-cycle margins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub cycles: usize,
    pub passed: bool,
    pub violations: usize,
    pub first_violation: Option<Violation>,
    pub min_margin: f64,
    pub final_margin: f64,
    pub supplied_work: f64,
    pub max_balance_residual: f64,
    pub max_balance_relative: f64,
    pub dissipated_constrained: f64,
    pub dissipated_unconstrained: f64,
    pub discarded: f64,
    pub suppressed: f64,
}

impl From<&AuditReport> for AuditSummary {
    fn from(r: &AuditReport) -> Self {
        Self {
            cycles: r.cycles,
            passed: r.passed(),
            violations: r.violations.len(),
            first_violation: r.first_violation,
            min_margin: r.min_margin,
            final_margin: r.final_margin,
            supplied_work: r.supplied_work,
            max_balance_residual: r.max_balance_residual,
            max_balance_relative: r.max_balance_relative,
            dissipated_constrained: r.dissipated_constrained,
            dissipated_unconstrained: r.dissipated_unconstrained,
            discarded: r.discarded,
            suppressed: r.suppressed,
        }
    }
}

pub fn audit_records(records: &[TraceRecord], config: &RunConfig) -> AuditReport {
    passivity_audit(records, config.dt, &config.storage_model(), &config.audit_tolerance())
}

/// Contents of the JSON written next to each trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub controller: ControllerKind,
    pub trace_hash: String,
    pub failure: Option<String>,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub trace: Option<PathBuf>,
    pub trace_hash: String,
    pub metrics: MetricsReport,
    pub audit: AuditSummary,
}

pub fn run(config: &RunConfig, kind: ControllerKind, out: Option<&Path>) -> anyhow::Result<(RunSummary, bool)> {
    let trace = run_with(config, kind)?;
    let hash = trace_hash(&trace.records);
    if let Some(path) = out {
        let sidecar = Sidecar {
            schema_version: SCHEMA_VERSION,
            controller: kind,
            trace_hash: hash.clone(),
            failure: trace.failure.as_ref().map(|e| e.to_string()),
            config: RunConfig {
                controller: kind,
                ..config.clone()
            },
        };
        write_trace(path, &trace.records, Some(&serde_json::to_value(&sidecar)?))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        trace: out.map(Path::to_path_buf),
        trace_hash: hash,
        metrics: compute_metrics(&trace, config)?,
        audit: AuditSummary::from(&audit_records(&trace.records, config)),
    };
    Ok((summary, trace.failure.is_some()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub controller: ControllerKind,
    pub trace_hash: String,
    pub metrics: MetricsReport,
    pub audit: AuditSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn diverged(&self) -> bool {
        self.rows.iter().any(|r| r.metrics.failure.is_some())
    }
}

fn row(config: &RunConfig, trace: &Trace) -> anyhow::Result<ComparisonRow> {
    Ok(ComparisonRow {
        controller: trace.controller,
        trace_hash: trace_hash(&trace.records),
        metrics: compute_metrics(trace, config)?,
        audit: AuditSummary::from(&audit_records(&trace.records, config)),
    })
}

/// Runs every controller on the same scenario and seed, one thread each.
/// Rows keep the order of `controllers`.
pub fn compare(config: &RunConfig, controllers: &[ControllerKind]) -> anyhow::Result<ComparisonReport> {
    if controllers.is_empty() {
        bail!("no controllers to compare");
    }
    config.validate()?;
    let rows = std::thread::scope(|s| {
        let jobs: Vec<_> = controllers
            .iter()
            .map(|&kind| s.spawn(move || run_with(config, kind).map_err(anyhow::Error::from).and_then(|t| row(config, &t))))
            .collect();
        jobs.into_iter()
            .map(|j| j.join().expect("comparison job panicked"))
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    Ok(ComparisonReport {
        schema_version: SCHEMA_VERSION,
        scenario: config.name.clone(),
        seed: config.seed,
        rows,
    })
}

/// Config for auditing a stored trace: the sidecar's when present, else the
/// defaults with `dt` taken from the first two rows.
pub fn audit_config(path: &Path, records: &[TraceRecord]) -> anyhow::Result<RunConfig> {
    match read_sidecar(path) {
        Ok(value) => {
            let sidecar: Sidecar = serde_json::from_value(value).context("sidecar")?;
            if sidecar.schema_version != SCHEMA_VERSION {
                bail!("sidecar schema_version {} is not {SCHEMA_VERSION}", sidecar.schema_version);
            }
            Ok(sidecar.config)
        }
        Err(e) => {
            log::warn!("no usable sidecar ({e}); auditing with default parameters");
            let mut config = RunConfig::default();
            if let [a, b, ..] = records {
                config.dt = b.t - a.t;
            }
            config.validate()?;
            Ok(config)
        }
    }
}

pub fn audit(path: &Path) -> anyhow::Result<AuditSummary> {
    let records = read_trace(path).with_context(|| format!("reading {}", path.display()))?;
    let config = audit_config(path, &records)?;
    Ok(AuditSummary::from(&audit_records(&records, &config)))
}

pub fn parse_controllers(list: &str) -> anyhow::Result<Vec<ControllerKind>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<ControllerKind>().map_err(anyhow::Error::msg))
        .collect()
}

pub fn write_json(value: &impl Serialize, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_lists() {
        assert_eq!(
            parse_controllers("ific, ufic,lpf,ds").unwrap(),
            ControllerKind::ALL.to_vec()
        );
        assert_eq!(parse_controllers("ific,ific").unwrap().len(), 2);
        assert!(parse_controllers("ific,pid").is_err());
        assert!(parse_controllers("").unwrap().is_empty());
    }

    #[test]
    fn empty_comparison_is_an_error() {
        assert!(compare(&RunConfig::default(), &[]).is_err());
    }
}
