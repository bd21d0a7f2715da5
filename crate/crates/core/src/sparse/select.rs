use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::loss_and_grad;
use crate::rng::Rng;
use crate::sparse::mask::{MemoryModel, SparseMask};
use crate::tensor::{ModelSpec, ParamSet, Unit};

/// Declared memory capacity of one client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub client_id: usize,
    pub memory_budget_bytes: u64,
}

/// The tightest budget across all devices, `None` when there are no profiles.
pub fn global_budget(profiles: &[DeviceProfile]) -> Option<u64> {
    profiles.iter().map(|p| p.memory_budget_bytes).min()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContributionConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Local SGD steps a client is expected to take per round.
    pub local_steps: usize,
}

/// First-order benefit of training each tensor, in mask entry order.
///
/// Calibration samples are shuffled once by `seed` and cut into batches of
/// `cfg.batch_size`; batch `k` is chunk `k mod chunks`. Each tensor's score
/// is the sum over batches of its mean absolute gradient, scaled by
/// `lr * local_steps`.
pub fn estimate_contribution(
    global: &ParamSet,
    calib: &LabeledDataset,
    num_batches: usize,
    seed: u64,
    cfg: &ContributionConfig,
) -> Result<Vec<f64>> {
    if calib.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if num_batches == 0 || cfg.batch_size == 0 {
        return Err(Error::Config(
            "num_batches and batch_size must be >= 1".into(),
        ));
    }
    let mut order: Vec<usize> = (0..calib.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let chunks: Vec<_> = order
        .chunks(cfg.batch_size)
        .map(|idx| calib.batch(idx))
        .collect::<Result<_>>()?;

    let n_units = global.num_layers() * 2;
    let mut per_chunk: Vec<Option<Vec<f64>>> = vec![None; chunks.len()];
    let mut scores = vec![0.0f64; n_units];
    let scale = cfg.lr * cfg.local_steps as f64;
    for k in 0..num_batches {
        let c = k % chunks.len();
        if per_chunk[c].is_none() {
            let (_, grads) = loss_and_grad(global, &chunks[c])?;
            let s = (0..n_units)
                .map(|i| {
                    let (l, u) = SparseMask::unit_at(i);
                    let g = grads.tensor(l, u).data();
                    let mean = g.iter().map(|v| v.abs() as f64).sum::<f64>() / g.len() as f64;
                    mean * scale
                })
                .collect();
            per_chunk[c] = Some(s);
        }
        for (acc, s) in scores.iter_mut().zip(per_chunk[c].as_ref().unwrap()) {
            *acc += s;
        }
    }
    Ok(scores)
}

/// Greedy knapsack over `scores.len()` items with a set-dependent cost.
///
/// Starting from `initial`, repeatedly adds the unselected item with the
/// highest `score / (cost(with item) - cost(current))` whose addition keeps
/// `cost <= budget`. Equal ratios go to the lower `tie_rank`.
pub fn greedy_select(
    scores: &[f64],
    initial: Vec<bool>,
    cost: impl Fn(&[bool]) -> u64,
    budget: u64,
    tie_rank: &[usize],
) -> Vec<bool> {
    let mut sel = initial;
    loop {
        let current = cost(&sel);
        let mut best: Option<(f64, usize)> = None;
        for i in 0..sel.len() {
            if sel[i] {
                continue;
            }
            sel[i] = true;
            let c = cost(&sel);
            sel[i] = false;
            if c > budget {
                continue;
            }
            let inc = c.saturating_sub(current);
            let ratio = if inc == 0 {
                f64::INFINITY
            } else {
                scores[i] / inc as f64
            };
            let better = match best {
                None => true,
                Some((r, j)) => ratio > r || (ratio == r && tie_rank[i] < tie_rank[j]),
            };
            if better {
                best = Some((ratio, i));
            }
        }
        match best {
            Some((_, i)) => sel[i] = true,
            None => return sel,
        }
    }
}

fn output_bias_mask(spec: &ModelSpec) -> SparseMask {
    SparseMask::from_selection(spec, &[(spec.num_layers() - 1, Unit::Bias)])
}

/// Smallest budget for which [`select_parameters`] succeeds.
pub fn min_budget(spec: &ModelSpec, mm: &MemoryModel) -> u64 {
    output_bias_mask(spec).memory_cost(mm)
}

/// Chooses the trainable tensors under `budget_bytes`.
///
/// The output bias is always selected; the rest is filled greedily by score
/// per incremental byte, ties going to deeper layers and then to the
/// lexicographically smaller tensor name.
pub fn select_parameters(
    scores: &[f64],
    spec: &ModelSpec,
    mm: &MemoryModel,
    budget_bytes: u64,
) -> Result<SparseMask> {
    spec.validate()?;
    let base = output_bias_mask(spec);
    if scores.len() != base.num_units() {
        return Err(Error::MaskMismatch(format!(
            "{} scores for {} tensors",
            scores.len(),
            base.num_units()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::Config(format!(
            "scores must be finite and >= 0, got {s}"
        )));
    }
    let minimum = base.memory_cost(mm);
    if budget_bytes < minimum {
        return Err(Error::InfeasibleBudget {
            budget: budget_bytes,
            minimum,
        });
    }

    let mut order: Vec<usize> = (0..base.num_units()).collect();
    order.sort_by_key(|&i| {
        let (l, u) = SparseMask::unit_at(i);
        (std::cmp::Reverse(l), SparseMask::tensor_name(l, u))
    });
    let mut tie_rank = vec![0; order.len()];
    for (rank, &i) in order.iter().enumerate() {
        tie_rank[i] = rank;
    }

    let initial: Vec<bool> = base.entries().iter().map(|e| e.selected).collect();
    let to_mask = |sel: &[bool]| {
        let mut m = SparseMask::empty(spec);
        for (i, &s) in sel.iter().enumerate() {
            let (l, u) = SparseMask::unit_at(i);
            m.set(l, u, s);
        }
        m
    };
    let sel = greedy_select(
        scores,
        initial,
        |sel| to_mask(sel).memory_cost(mm),
        budget_bytes,
        &tie_rank,
    );
    Ok(to_mask(&sel))
}
