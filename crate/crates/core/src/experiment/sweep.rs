use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{cmd_run, RunSummary};
use crate::error::{Error, Result};
use crate::protocol::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    StragglerFraction,
    DelayMax,
    NumClients,
    Alpha,
    Strategy,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::StragglerFraction => "straggler_fraction",
            SweepAxis::DelayMax => "delay_max",
            SweepAxis::NumClients => "num_clients",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Strategy => "strategy",
        }
    }

    /// Returns a copy of `cfg` with this axis set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let bad = |e: &dyn fmt::Display| {
            Error::Config(format!("{}: cannot parse `{value}`: {e}", self.name()))
        };
        let mut c = cfg.clone();
        match self {
            SweepAxis::StragglerFraction => {
                c.straggler_fraction = value.parse().map_err(|e| bad(&e))?
            }
            SweepAxis::DelayMax => c.straggler_delay_max_s = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::NumClients => c.num_clients = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::Alpha => c.alpha = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::Strategy => c.strategy = value.parse().map_err(|e| bad(&e))?,
        }
        Ok(c)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straggler_fraction" => Ok(SweepAxis::StragglerFraction),
            "delay_max" | "straggler_delay_max_s" => Ok(SweepAxis::DelayMax),
            "num_clients" => Ok(SweepAxis::NumClients),
            "alpha" => Ok(SweepAxis::Alpha),
            "strategy" => Ok(SweepAxis::Strategy),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected straggler_fraction, delay_max, num_clients, alpha or strategy)"
            ))),
        }
    }
}

/// One row of the combined sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: String,
    pub strategy: Strategy,
    pub repeat: usize,
    pub steps_to_target: Option<u64>,
    pub sim_time_s: Option<f64>,
    pub reached: bool,
}

/// A point that failed; the sweep records it and continues.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub axis_value: String,
    pub strategy: Strategy,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepResult {
    /// Rows for `strategy` in axis-value order of the sweep.
    pub fn rows_for(&self, strategy: Strategy) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.strategy == strategy)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "axis_value",
            "strategy",
            "repeat",
            "steps_to_target",
            "sim_time_s",
            "reached",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.axis_value.clone(),
                r.strategy.to_string(),
                r.repeat.to_string(),
                r.steps_to_target.map(|s| s.to_string()).unwrap_or_default(),
                r.sim_time_s.map(crate::sim::fmt_g6).unwrap_or_default(),
                r.reached.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn row(axis_value: &str, s: &RunSummary) -> SweepRow {
    SweepRow {
        axis_value: axis_value.to_string(),
        strategy: s.strategy,
        repeat: s.repeat,
        steps_to_target: s.metrics.steps_to_target,
        sim_time_s: s.metrics.sim_time_to_target_s,
        reached: s.metrics.reached,
    }
}

/// Runs every (value, strategy) point, each in its own subdirectory of
/// `out_dir`, then writes `sweep.csv` and `sweep_failures.json`.
///
/// `strategies` is ignored when sweeping the strategy axis; when empty the
/// config's strategy is used.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    strategies: &[Strategy],
    out_dir: &Path,
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let strategies: Vec<Strategy> = if axis == SweepAxis::Strategy || strategies.is_empty() {
        vec![cfg.strategy]
    } else {
        strategies.to_vec()
    };
    // Parse every value up front so a typo fails before any work.
    for v in values {
        axis.apply(cfg, v)?;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let points: Vec<(&String, Strategy)> = values
        .iter()
        .flat_map(|v| strategies.iter().map(move |s| (v, *s)))
        .collect();
    let outcomes: Vec<std::result::Result<Vec<RunSummary>, String>> = points
        .par_iter()
        .map(|&(value, strategy)| {
            let mut c = axis.apply(cfg, value).map_err(|e| e.to_string())?;
            if axis != SweepAxis::Strategy {
                c.strategy = strategy;
            }
            c.validate().map_err(|e| e.to_string())?;
            let dir = out_dir
                .join(format!("{axis}={value}"))
                .join(c.strategy.name());
            cmd_run(&c, &dir).map(|r| r.runs).map_err(|e| e.to_string())
        })
        .collect();

    let mut result = SweepResult::default();
    for ((value, strategy), outcome) in points.into_iter().zip(outcomes) {
        match outcome {
            Ok(runs) => result.rows.extend(runs.iter().map(|s| row(value, s))),
            Err(error) => result.failures.push(SweepFailure {
                axis_value: value.clone(),
                strategy: if axis == SweepAxis::Strategy {
                    value.parse().unwrap_or(strategy)
                } else {
                    strategy
                },
                error,
            }),
        }
    }
    let csv_path = out_dir.join("sweep.csv");
    std::fs::write(&csv_path, result.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
    let fail_path = out_dir.join("sweep_failures.json");
    let failures = serde_json::to_string_pretty(&result.failures)?;
    std::fs::write(&fail_path, failures + "\n").map_err(|e| Error::io(&fail_path, e))?;
    Ok(result)
}
