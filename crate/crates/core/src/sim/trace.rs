//! Simulation trace and its CSV form.
//!
//! Columns: `step,sim_time_s,event,version,accuracy,loss,upload_bytes_cum,download_bytes_cum`.
//! Floats use 6 significant digits (`%.6g`); accuracy and loss are empty
//! except on `eval` rows.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str =
    "step,sim_time_s,event,version,accuracy,loss,upload_bytes_cum,download_bytes_cum";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Dispatch,
    ClientFinished,
    Aggregation,
    Eval,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Dispatch => "dispatch",
            EventKind::ClientFinished => "client_finished",
            EventKind::Aggregation => "aggregation",
            EventKind::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dispatch" => Ok(EventKind::Dispatch),
            "client_finished" => Ok(EventKind::ClientFinished),
            "aggregation" => Ok(EventKind::Aggregation),
            "eval" => Ok(EventKind::Eval),
            other => Err(Error::Decode(format!("unknown trace event `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub sim_time_s: f64,
    pub event: EventKind,
    pub version: u64,
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    pub upload_bytes_cum: u64,
    pub download_bytes_cum: u64,
    /// Client for dispatch / client_finished rows. Not written to CSV.
    pub client: Option<usize>,
}

/// Why the event loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    MaxSteps,
    MaxSimTime,
    QueueExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub records: Vec<TraceRecord>,
    pub stop_reason: StopReason,
}

impl SimTrace {
    pub fn evals(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.event == EventKind::Eval)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.records.iter().filter(|r| r.event == kind).count()
    }

    pub fn final_step(&self) -> u64 {
        self.records.last().map_or(0, |r| r.step)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(fmt_g6).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.step,
                fmt_g6(r.sim_time_s),
                r.event.as_str(),
                r.version,
                opt(r.accuracy),
                opt(r.loss),
                r.upload_bytes_cum,
                r.download_bytes_cum
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Parses trace CSV rows. The stop reason is not part of the file and is
/// reported as `QueueExhausted`.
pub fn parse_trace_csv(text: &str) -> Result<SimTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TRACE_HEADER {
        return Err(Error::Decode(format!("unexpected trace header {header:?}")));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|e| Error::Decode(format!("column {i} `{}`: {e}", &row[i])))
        };
        let int = |i: usize| -> Result<u64> {
            row[i]
                .parse()
                .map_err(|e| Error::Decode(format!("column {i} `{}`: {e}", &row[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if row[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        records.push(TraceRecord {
            step: int(0)?,
            sim_time_s: num(1)?,
            event: EventKind::parse(&row[2])?,
            version: int(3)?,
            accuracy: opt(4)?,
            loss: opt(5)?,
            upload_bytes_cum: int(6)?,
            download_bytes_cum: int(7)?,
            client: None,
        });
    }
    Ok(SimTrace {
        records,
        stop_reason: StopReason::QueueExhausted,
    })
}

/// `printf("%.6g")`.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g6_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (16.123456789, "16.1235"),
            (123456.7, "123457"),
            (999999.5, "1e+06"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
            (0.693152180559, "0.693152"),
            (30.999999999, "31"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g6(x), s, "{x}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = SimTrace {
            records: vec![
                TraceRecord {
                    step: 0,
                    sim_time_s: 0.0,
                    event: EventKind::Eval,
                    version: 0,
                    accuracy: Some(0.5),
                    loss: Some(0.75),
                    upload_bytes_cum: 0,
                    download_bytes_cum: 0,
                    client: None,
                },
                TraceRecord {
                    step: 1,
                    sim_time_s: 1.25,
                    event: EventKind::ClientFinished,
                    version: 0,
                    accuracy: None,
                    loss: None,
                    upload_bytes_cum: 100,
                    download_bytes_cum: 0,
                    client: Some(3),
                },
            ],
            stop_reason: StopReason::MaxSteps,
        };
        let csv = t.to_csv();
        assert!(csv.starts_with(TRACE_HEADER));
        assert!(csv.contains("1,1.25,client_finished,0,,,100,0\n"));
        let back = parse_trace_csv(&csv).unwrap();
        assert_eq!(back.records.len(), 2);
        assert_eq!(back.records[0].accuracy, Some(0.5));
        assert_eq!(back.records[1].upload_bytes_cum, 100);
    }
}
