use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocol::ClientUpdate;
use crate::sparse::SparseMask;
use crate::tensor::ParamSet;

/// Staleness bookkeeping for one buffered update at aggregation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StalenessWeight {
    pub client_id: usize,
    pub age: u64,
    pub variance: f64,
    pub weight: f64,
}

/// Communication steps elapsed since the update was received.
pub fn compute_age(update: &ClientUpdate, now_step: u64) -> Result<u64> {
    now_step
        .checked_sub(update.received_step)
        .ok_or(Error::ClockRegression {
            now: now_step,
            received: update.received_step,
        })
}

/// Sum over selected tensors of the population variance of `local - global`,
/// where `local = global + delta` is rebuilt in `f64`.
pub fn compute_variance(
    update: &ClientUpdate,
    global: &ParamSet,
    mask: &SparseMask,
) -> Result<f64> {
    mask.check_params(global)?;
    update.delta.check_mask(mask)?;
    let mut total = 0.0;
    for (t, (l, u)) in update.delta.tensors.iter().zip(mask.selected()) {
        let g = global.tensor(l, u).data();
        let n = t.values.len() as f64;
        let diffs: Vec<f64> = t
            .values
            .iter()
            .zip(g)
            .map(|(&d, &gv)| (gv as f64 + d as f64) - gv as f64)
            .collect();
        let mean = diffs.iter().sum::<f64>() / n;
        total += diffs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    }
    Ok(total)
}

/// `1 / (1 + age * variance)`.
pub fn staleness_weight(age: u64, variance: f64) -> f64 {
    1.0 / (1.0 + age as f64 * variance)
}

/// Age-only polynomial staleness `(1 + age)^-exponent`.
pub fn polynomial_staleness(age: u64, exponent: f64) -> f64 {
    (1.0 + age as f64).powf(-exponent)
}
