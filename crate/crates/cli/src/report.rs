//! Structured run reports and plot-ready CSV tables.
//!
//! Reports carry every statistic with either an error bar or the `exact`
//! tag, the echoed config with all defaults explicit, and wall-clock /
//! throughput figures. CSV tables never contain timing fields, so byte
//! identity across runs is a hard guarantee whenever seeds match.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// One reported statistic: either exact (deterministic identity) or carrying
/// its standard error.
#[derive(Clone, Debug, Serialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub exact: bool,
}

impl Statistic {
    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Statistic {
            name: name.into(),
            value,
            std_error: None,
            exact: true,
        }
    }

    pub fn with_error(name: impl Into<String>, value: f64, std_error: f64) -> Self {
        Statistic {
            name: name.into(),
            value,
            std_error: Some(std_error),
            exact: false,
        }
    }
}

/// A raw output table, one CSV file per table.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Shorthand for formatting a float cell (shortest round-trip form).
pub fn cell<T: std::fmt::Display>(v: T) -> String {
    v.to_string()
}

/// What a pipeline produced, before materialization.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub statistics: Vec<Statistic>,
    pub tables: Vec<Table>,
    pub failures: Vec<String>,
    /// Total particle-step count, for throughput reporting.
    pub particle_steps: u64,
}

impl RunOutcome {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn check(&mut self, ok: bool, message: impl Into<String>) {
        if !ok {
            self.failures.push(message.into());
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub kind: String,
    pub pass: bool,
    pub failures: Vec<String>,
    pub statistics: Vec<Statistic>,
    pub config: ExperimentConfig,
    pub wall_clock_seconds: f64,
    pub particle_steps_per_second: f64,
    pub tables: Vec<String>,
}

impl RunReport {
    /// Writes the CSV tables and the JSON report under `out_dir`.
    pub fn materialize(
        config: &ExperimentConfig,
        outcome: RunOutcome,
        wall_clock_seconds: f64,
        out_dir: &Path,
    ) -> anyhow::Result<RunReport> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
        let mut table_paths = Vec::new();
        for table in &outcome.tables {
            let path = out_dir.join(format!("{}_{}.csv", config.kind.as_str(), table.name));
            write_csv(&path, table)?;
            table_paths.push(path.display().to_string());
        }
        let report = RunReport {
            kind: config.kind.as_str().to_string(),
            pass: outcome.pass(),
            failures: outcome.failures,
            statistics: outcome.statistics,
            config: config.clone(),
            wall_clock_seconds,
            particle_steps_per_second: if wall_clock_seconds > 0.0 {
                outcome.particle_steps as f64 / wall_clock_seconds
            } else {
                0.0
            },
            tables: table_paths,
        };
        let path = out_dir.join("report.json");
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(report)
    }
}

fn write_csv(path: &PathBuf, table: &Table) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
