//! The `sweep` subcommand: a family of runs over one parameter axis.
//!
//! Each axis point owns one subdirectory (`p03_u_over_j_0p5/`, …) holding an
//! ordinary run. Points already completed with a matching content hash are
//! skipped, so an interrupted sweep resumes where it stopped. A failing
//! point is recorded in `sweep_report.json` and the remaining points still
//! run. Aggregation afterwards reads only the per-point `summary.csv` files
//! — never recomputing anything — and writes axis-indexed tables.

use std::collections::VecDeque;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bhtw_core::exec::ExecPolicy;

use crate::config::{axis_value_token, SweepConfig};
use crate::error::{CliError, Result};
use crate::manifest::{unix_now, ManifestCore};
use crate::runner::{execute_run_at, output_root, SUMMARY_COLUMNS};

/// Hashed identity of a sweep: the resolved base run plus the axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepManifest {
    pub artifact_version: String,
    pub base: ManifestCore,
    pub axis_field: String,
    pub axis_values: Vec<f64>,
    pub content_hash: String,
    pub created_unix_seconds: u64,
    pub completed: bool,
}

/// Outcome of one axis point.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum PointStatus {
    Completed,
    SkippedExisting,
    Failed { error: String, numeric: bool },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointReport {
    pub index: usize,
    pub value: f64,
    pub dir: String,
    #[serde(flatten)]
    pub status: PointStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis_field: String,
    pub points: Vec<PointReport>,
    pub completed: usize,
    pub skipped: usize,
    pub failed: usize,
}

pub struct SweepOutcome {
    pub dir: PathBuf,
    pub report: SweepReport,
}

/// Runs every axis point, then aggregates. `workers` > 1 runs points
/// concurrently (each point internally sequential); otherwise points run one
/// after another with the library's default execution policy inside each.
pub fn execute_sweep(
    cfg: &SweepConfig,
    out: Option<&Path>,
    workers: Option<usize>,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let base_core = ManifestCore::from_config(&cfg.base)?;
    let axis_field = cfg.axis.field.name().to_string();

    // Per-point manifests; resolution failures (for example a preset site
    // outside a swept chain length) are recorded, not fatal.
    let mut points: Vec<(usize, f64, std::result::Result<ManifestCore, CliError>)> = Vec::new();
    for (index, &value) in cfg.axis.values.iter().enumerate() {
        let point_cfg = cfg.point(value);
        points.push((index, value, ManifestCore::from_config(&point_cfg)));
    }

    let sweep_hash = {
        let identity = serde_json::json!({
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "base": base_core,
            "axis_field": axis_field,
            "axis_values": cfg.axis.values,
        });
        let digest = Sha256::digest(serde_json::to_vec(&identity)?);
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("hex digits write");
        }
        hex
    };
    let dir = match out {
        Some(path) => path.to_path_buf(),
        None => output_root().join(format!("sweep_{}", &sweep_hash[..12])),
    };
    std::fs::create_dir_all(&dir)
        .map_err(|err| CliError::invalid(format!("cannot create {}: {err}", dir.display())))?;

    let mut manifest = SweepManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        base: base_core,
        axis_field: axis_field.clone(),
        axis_values: cfg.axis.values.clone(),
        content_hash: sweep_hash,
        created_unix_seconds: unix_now(),
        completed: false,
    };
    write_sweep_manifest(&dir, &manifest)?;

    let worker_count = workers.unwrap_or(1).min(points.len().max(1));
    let point_policy = if worker_count > 1 {
        ExecPolicy::Sequential
    } else {
        crate::runner::policy_for_workers(workers)
    };

    // Work queue of point indices; each directory is owned by exactly one
    // worker for the whole sweep.
    let queue: Mutex<VecDeque<usize>> = Mutex::new((0..points.len()).collect());
    let results: Vec<Mutex<Option<PointReport>>> =
        (0..points.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop_front();
                let Some(idx) = next else { break };
                let (index, value, core) = &points[idx];
                let token = axis_value_token(*value);
                let point_dir = dir.join(format!("p{index:02}_{axis_field}_{token}"));
                let status = match core {
                    Ok(core) => match execute_run_at(core.clone(), &point_dir, point_policy) {
                        Ok(outcome) if outcome.reused => PointStatus::SkippedExisting,
                        Ok(_) => PointStatus::Completed,
                        Err(err) => PointStatus::Failed {
                            error: err.to_string(),
                            numeric: err.exit_code() == crate::error::EXIT_NUMERIC,
                        },
                    },
                    Err(err) => PointStatus::Failed {
                        error: err.to_string(),
                        numeric: false,
                    },
                };
                *results[idx].lock().expect("result lock") = Some(PointReport {
                    index: *index,
                    value: *value,
                    dir: point_dir
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    status,
                });
            });
        }
    });

    let point_reports: Vec<PointReport> = results
        .into_iter()
        .map(|slot| slot.into_inner().expect("result lock").expect("point ran"))
        .collect();
    let report = SweepReport {
        axis_field: axis_field.clone(),
        completed: point_reports
            .iter()
            .filter(|p| p.status == PointStatus::Completed)
            .count(),
        skipped: point_reports
            .iter()
            .filter(|p| p.status == PointStatus::SkippedExisting)
            .count(),
        failed: point_reports
            .iter()
            .filter(|p| matches!(p.status, PointStatus::Failed { .. }))
            .count(),
        points: point_reports,
    };

    aggregate(&dir, &axis_field, &report)?;
    write_json(&dir.join("sweep_report.json"), &serde_json::to_value(&report)?)?;
    manifest.completed = true;
    write_sweep_manifest(&dir, &manifest)?;
    Ok(SweepOutcome { dir, report })
}

fn write_sweep_manifest(dir: &Path, manifest: &SweepManifest) -> Result<()> {
    write_json(&dir.join("sweep_manifest.json"), &serde_json::to_value(manifest)?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|err| CliError::invalid(format!("cannot write {}: {err}", path.display())))?;
    Ok(())
}

/// One parsed per-point summary row, keyed by column name.
struct SummaryValues {
    columns: Vec<String>,
    row: Vec<String>,
}

impl SummaryValues {
    fn get(&self, column: &str) -> &str {
        self.columns
            .iter()
            .position(|c| c == column)
            .map(|i| self.row[i].as_str())
            .unwrap_or("")
    }
}

fn read_summary(dir: &Path) -> Result<SummaryValues> {
    let path = dir.join("summary.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|err| CliError::invalid(format!("cannot read {}: {err}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::invalid(format!("{} is empty", path.display())))?;
    let row = lines
        .next()
        .ok_or_else(|| CliError::invalid(format!("{} has no data row", path.display())))?;
    Ok(SummaryValues {
        columns: header.split(',').map(str::to_string).collect(),
        row: row.split(',').map(str::to_string).collect(),
    })
}

/// Builds all aggregate tables from per-point `summary.csv` files. Points
/// without a summary (failed runs) are simply absent from the tables.
fn aggregate(dir: &Path, axis_field: &str, report: &SweepReport) -> Result<()> {
    let mut rows: Vec<(f64, SummaryValues)> = Vec::new();
    for point in &report.points {
        if matches!(point.status, PointStatus::Failed { .. }) {
            continue;
        }
        rows.push((point.value, read_summary(&dir.join(&point.dir))?));
    }

    let mut main = String::new();
    main.push_str("axis_field,axis_value,");
    main.push_str(&SUMMARY_COLUMNS.join(","));
    main.push('\n');
    for (value, summary) in &rows {
        main.push_str(&format!("{axis_field},{value}"));
        for column in SUMMARY_COLUMNS {
            main.push(',');
            main.push_str(summary.get(column));
        }
        main.push('\n');
    }
    write_text(&dir.join("aggregate_summary.csv"), &main)?;

    for (file, columns) in [
        ("aggregate_var_t.csv", &["var_t_dispersion", "var_t_occupation"][..]),
        ("aggregate_ftle.csv", &["ftle_max", "ftle_positive_sum"][..]),
        ("aggregate_crossover.csv", &["crossover_time", "late_slope"][..]),
    ] {
        let mut text = String::from("axis_value");
        for column in columns {
            text.push(',');
            text.push_str(column);
        }
        text.push('\n');
        for (value, summary) in &rows {
            text.push_str(&format!("{value}"));
            for column in columns {
                text.push(',');
                text.push_str(summary.get(column));
            }
            text.push('\n');
        }
        write_text(&dir.join(file), &text)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = std::fs::File::create(path)
        .map_err(|err| CliError::invalid(format!("cannot write {}: {err}", path.display())))?;
    out.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_sweep_config;

    fn tiny_sweep() -> SweepConfig {
        parse_sweep_config(
            &serde_json::json!({
                "base": {
                    "sites": 4,
                    "u_over_j": 0.1,
                    "mu_over_j": 0.0,
                    "preset": {"kind": "single_site", "site": 1},
                    "trajectories": 8,
                    "integrator": {"step": 1.0, "t_final": 500.0,
                                   "output_stride": 10, "conservation_tol": 1e-6},
                    "fit_window_ln": [2.0, 5.5]
                },
                "axis": {"field": "u_over_j", "values": [0.1, 0.5]}
            })
            .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn sweep_runs_points_and_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_sweep();
        let outcome = execute_sweep(&cfg, Some(dir.path()), Some(1)).unwrap();
        assert_eq!(outcome.report.completed, 2);
        assert_eq!(outcome.report.failed, 0);
        assert!(dir.path().join("p00_u_over_j_0p1/summary.csv").exists());
        assert!(dir.path().join("p01_u_over_j_0p5/summary.csv").exists());
        let agg = std::fs::read_to_string(dir.path().join("aggregate_summary.csv")).unwrap();
        assert_eq!(agg.lines().count(), 3);
        assert!(agg.starts_with("axis_field,axis_value,content_hash"));
        assert!(dir.path().join("aggregate_var_t.csv").exists());
        assert!(dir.path().join("aggregate_ftle.csv").exists());
        assert!(dir.path().join("aggregate_crossover.csv").exists());
        let report_text =
            std::fs::read_to_string(dir.path().join("sweep_report.json")).unwrap();
        assert!(report_text.contains("\"completed\""));

        // Resume: everything already done, nothing recomputed.
        let again = execute_sweep(&cfg, Some(dir.path()), Some(1)).unwrap();
        assert_eq!(again.report.skipped, 2);
        assert_eq!(again.report.completed, 0);
    }

    #[test]
    fn failing_point_is_recorded_and_others_continue() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_sweep();
        // Swept chain lengths: site 3 exists for L = 5 but not for L = 2.
        cfg.base.preset = crate::config::PresetConfig::SingleSite { site: 3 };
        cfg.axis.field = crate::config::AxisField::Sites;
        cfg.axis.values = vec![2.0, 5.0];
        let outcome = execute_sweep(&cfg, Some(dir.path()), Some(1)).unwrap();
        assert_eq!(outcome.report.completed, 1);
        assert_eq!(outcome.report.failed, 1);
        let agg = std::fs::read_to_string(dir.path().join("aggregate_summary.csv")).unwrap();
        assert_eq!(agg.lines().count(), 2, "only the good point aggregates");
        let report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("sweep_report.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(report["points"][0]["status"], "failed");
        assert_eq!(report["points"][1]["status"], "completed");
    }

    #[test]
    fn concurrent_workers_produce_same_bytes_as_serial() {
        let dir_serial = tempfile::tempdir().unwrap();
        let dir_conc = tempfile::tempdir().unwrap();
        let cfg = tiny_sweep();
        execute_sweep(&cfg, Some(dir_serial.path()), Some(1)).unwrap();
        execute_sweep(&cfg, Some(dir_conc.path()), Some(2)).unwrap();
        for point in ["p00_u_over_j_0p1", "p01_u_over_j_0p5"] {
            let a = std::fs::read(dir_serial.path().join(point).join("moments.csv")).unwrap();
            let b = std::fs::read(dir_conc.path().join(point).join("moments.csv")).unwrap();
            assert_eq!(a, b, "{point} differs between worker counts");
        }
    }
}
