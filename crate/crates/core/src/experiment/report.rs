use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{RunSummary, Speedup, SummaryReport};
use crate::error::{Error, Result};
use crate::protocol::Strategy;

/// Compact step count: `10000 -> "10k"`, `2500 -> "2.5k"`, `700 -> "700"`.
pub fn format_steps(steps: u64) -> String {
    if steps >= 1000 && steps.is_multiple_of(100) {
        let k = steps as f64 / 1000.0;
        if steps.is_multiple_of(1000) {
            format!("{}k", steps / 1000)
        } else {
            format!("{k}k")
        }
    } else {
        steps.to_string()
    }
}

/// Table cell for `run` compared with the matching FTTE run.
pub fn speedup_cell(run: &RunSummary, ftte_steps: Option<u64>) -> (Option<f64>, String) {
    let m = &run.metrics;
    match (m.steps_to_target, ftte_steps) {
        (Some(s), Some(f)) if f > 0 => {
            let r = s as f64 / f as f64;
            (Some(r), format!("{s} (×{r:.2})"))
        }
        (Some(s), _) => (None, s.to_string()),
        (None, _) if m.oscillating => (None, "Osc.".to_string()),
        (None, Some(f)) if f > 0 => {
            let r = run.max_steps as f64 / f as f64;
            (
                Some(r),
                format!("> {} (> ×{r:.1})", format_steps(run.max_steps)),
            )
        }
        (None, _) => (None, format!("> {}", format_steps(run.max_steps))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub strategy: Strategy,
    pub repeat: usize,
    pub run_seed: u64,
    pub steps_to_target: Option<u64>,
    pub reached: bool,
    pub oscillating: bool,
    pub ratio_vs_ftte: Option<f64>,
    pub cell: String,
}

/// Speedup table across strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupTable {
    pub rows: Vec<ReportRow>,
}

impl SpeedupTable {
    pub fn speedups(&self) -> Vec<Speedup> {
        self.rows
            .iter()
            .filter(|r| r.strategy != Strategy::Ftte)
            .map(|r| Speedup {
                strategy: r.strategy,
                repeat: r.repeat,
                ratio: r.ratio_vs_ftte,
                cell: r.cell.clone(),
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut strategies: Vec<Strategy> = self.rows.iter().map(|r| r.strategy).collect();
        strategies.sort_by_key(|s| (*s != Strategy::Ftte, s.name()));
        strategies.dedup();
        let repeats: Vec<usize> = {
            let mut v: Vec<usize> = self.rows.iter().map(|r| r.repeat).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("repeat".to_string())
            .chain(strategies.iter().map(|s| s.to_string()))
            .collect()];
        for rep in &repeats {
            let mut line = vec![rep.to_string()];
            for s in &strategies {
                let cell = self
                    .rows
                    .iter()
                    .find(|r| r.strategy == *s && r.repeat == *rep)
                    .map_or("-".to_string(), |r| r.cell.clone());
                line.push(cell);
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| {
                grid.iter()
                    .map(|row| row[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in &grid {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "strategy",
            "repeat",
            "run_seed",
            "steps_to_target",
            "reached",
            "oscillating",
            "ratio_vs_ftte",
            "cell",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.strategy.to_string(),
                r.repeat.to_string(),
                r.run_seed.to_string(),
                r.steps_to_target.map(|s| s.to_string()).unwrap_or_default(),
                r.reached.to_string(),
                r.oscillating.to_string(),
                r.ratio_vs_ftte
                    .map(|x| format!("{x:.4}"))
                    .unwrap_or_default(),
                r.cell.clone(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Builds the table from run summaries. Every strategy must have an FTTE run
/// with the same dataset and partition seeds.
pub fn speedup_table(runs: &[RunSummary]) -> Result<SpeedupTable> {
    let mut strategies: Vec<Strategy> = runs.iter().map(|r| r.strategy).collect();
    strategies.sort_by_key(|s| s.name());
    strategies.dedup();
    if strategies.len() < 2 {
        return Err(Error::IncompatibleRuns(format!(
            "need at least two strategies, found {}",
            strategies.len()
        )));
    }
    let ftte: BTreeMap<usize, &RunSummary> = runs
        .iter()
        .filter(|r| r.strategy == Strategy::Ftte)
        .map(|r| (r.repeat, r))
        .collect();
    if ftte.is_empty() {
        return Err(Error::IncompatibleRuns(
            "no ftte runs to compare against".into(),
        ));
    }
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let base = ftte.get(&run.repeat).ok_or_else(|| {
            Error::IncompatibleRuns(format!(
                "{} repeat {} has no matching ftte run",
                run.strategy, run.repeat
            ))
        })?;
        if base.seeds.dataset != run.seeds.dataset || base.seeds.partition != run.seeds.partition {
            return Err(Error::IncompatibleRuns(format!(
                "{} repeat {} uses different dataset/partition seeds than ftte",
                run.strategy, run.repeat
            )));
        }
        let (ratio, cell) = if run.strategy == Strategy::Ftte {
            (Some(1.0), speedup_cell(run, None).1)
        } else {
            speedup_cell(run, base.metrics.steps_to_target)
        };
        rows.push(ReportRow {
            strategy: run.strategy,
            repeat: run.repeat,
            run_seed: run.seeds.run,
            steps_to_target: run.metrics.steps_to_target,
            reached: run.metrics.reached,
            oscillating: run.metrics.oscillating,
            ratio_vs_ftte: ratio,
            cell,
        });
    }
    rows.sort_by_key(|r| (r.repeat, r.strategy != Strategy::Ftte, r.strategy.name()));
    Ok(SpeedupTable { rows })
}

/// All `summary.json` files in `dir` and its immediate subdirectories.
pub fn collect_summaries(dir: &Path) -> Result<Vec<RunSummary>> {
    let mut files: Vec<PathBuf> = Vec::new();
    let direct = dir.join("summary.json");
    if direct.is_file() {
        files.push(direct);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    files.extend(
        subdirs
            .into_iter()
            .map(|d| d.join("summary.json"))
            .filter(|p| p.is_file()),
    );
    let mut runs = Vec::new();
    for f in files {
        runs.extend(SummaryReport::read(&f)?.runs);
    }
    Ok(runs)
}

/// Reads summaries under `dir`, writes `report.txt` and `report.csv` there
/// and returns the text table.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let runs = collect_summaries(dir)?;
    let table = speedup_table(&runs)?;
    let text = table.to_text();
    let txt = dir.join("report.txt");
    std::fs::write(&txt, &text).map_err(|e| Error::io(&txt, e))?;
    let csv_path = dir.join("report.csv");
    std::fs::write(&csv_path, table.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
    Ok(text)
}
