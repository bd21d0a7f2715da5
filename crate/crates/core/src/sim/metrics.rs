use serde::{Deserialize, Serialize};

use super::trace::SimTrace;
use crate::error::{Error, Result};

/// Outcome of a run measured against a target accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    /// Step of the first eval at or above target, if any.
    pub steps: Option<u64>,
    pub sim_time_s: Option<f64>,
    /// Coefficient of variation of the last-quartile eval losses exceeds 0.5.
    pub oscillating: bool,
}

impl TargetResult {
    pub fn reached(&self) -> bool {
        self.steps.is_some()
    }
}

pub const OSCILLATION_CV: f64 = 0.5;

pub fn steps_to_target(trace: &SimTrace, target: f64) -> Result<TargetResult> {
    let evals: Vec<_> = trace.evals().collect();
    if evals.is_empty() {
        return Err(Error::NoEvals);
    }
    let hit = evals
        .iter()
        .find(|r| r.accuracy.is_some_and(|a| a >= target));
    let losses: Vec<f64> = evals.iter().filter_map(|r| r.loss).collect();
    let tail = &losses[losses.len() - losses.len().div_ceil(4).max(1).min(losses.len())..];
    Ok(TargetResult {
        steps: hit.map(|r| r.step),
        sim_time_s: hit.map(|r| r.sim_time_s),
        oscillating: coefficient_of_variation(tail) > OSCILLATION_CV,
    })
}

fn coefficient_of_variation(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if mean.abs() < f64::MIN_POSITIVE {
        return 0.0;
    }
    var.sqrt() / mean.abs()
}
