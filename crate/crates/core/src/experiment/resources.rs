use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sparse::{MemoryModel, SparseDelta, SparseMask};
use crate::tensor::ModelSpec;

/// Memory and payload of a mask next to the full and last-layer alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub mask_density: f64,
    pub selected_tensors: Vec<String>,
    pub sparse_memory_bytes: u64,
    pub full_memory_bytes: u64,
    pub last_layer_memory_bytes: u64,
    pub sparse_payload_bytes: u64,
    pub full_payload_bytes: u64,
    pub last_layer_payload_bytes: u64,
    /// `100 * (1 - sparse / full)` for training memory.
    pub memory_reduction_pct: f64,
    /// `100 * (1 - sparse / full)` for upload payload.
    pub payload_reduction_pct: f64,
    pub last_layer_memory_reduction_pct: f64,
    pub last_layer_payload_reduction_pct: f64,
}

fn reduction_pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * (1.0 - part as f64 / whole as f64)
    }
}

pub fn report_resources(
    spec: &ModelSpec,
    mask: &SparseMask,
    mm: &MemoryModel,
) -> Result<ResourceReport> {
    mask.check_spec(spec)?;
    let full = SparseMask::full(spec);
    let last = SparseMask::last_layer(spec);
    let mem = |m: &SparseMask| m.memory_cost(mm);
    let pay = |m: &SparseMask| SparseDelta::encoded_len_for(m) as u64;
    Ok(ResourceReport {
        mask_density: mask.density(),
        selected_tensors: mask
            .selected()
            .map(|(l, u)| SparseMask::tensor_name(l, u))
            .collect(),
        sparse_memory_bytes: mem(mask),
        full_memory_bytes: mem(&full),
        last_layer_memory_bytes: mem(&last),
        sparse_payload_bytes: pay(mask),
        full_payload_bytes: pay(&full),
        last_layer_payload_bytes: pay(&last),
        memory_reduction_pct: reduction_pct(mem(mask), mem(&full)),
        payload_reduction_pct: reduction_pct(pay(mask), pay(&full)),
        last_layer_memory_reduction_pct: reduction_pct(mem(&last), mem(&full)),
        last_layer_payload_reduction_pct: reduction_pct(pay(&last), pay(&full)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Unit;

    fn spec() -> ModelSpec {
        ModelSpec::new(vec![4, 3, 2], 0).unwrap()
    }

    #[test]
    fn full_mask_has_no_reduction() {
        let s = spec();
        let r = report_resources(&s, &SparseMask::full(&s), &MemoryModel::sgd(1)).unwrap();
        assert_eq!(r.memory_reduction_pct, 0.0);
        assert_eq!(r.payload_reduction_pct, 0.0);
        assert_eq!(r.full_memory_bytes, 220);
    }

    #[test]
    fn hand_computed_percentages() {
        let s = spec();
        let mask =
            SparseMask::from_selection(&s, &[(0, Unit::Bias), (1, Unit::Weights), (1, Unit::Bias)]);
        let r = report_resources(&s, &mask, &MemoryModel::sgd(1)).unwrap();
        // payload: 16 + (8+8+3*4) + (8+10+6*4) + (8+8+2*4) = 110; full adds fc0.weight (8+10+48) = 176
        assert_eq!(r.sparse_payload_bytes, 110);
        assert_eq!(r.full_payload_bytes, 176);
        assert!((r.payload_reduction_pct - 100.0 * 66.0 / 176.0).abs() < 1e-12);
        // memory: frozen fc0.weight 48 + trainable (3+6+2)*8 = 88 + activations (4+3+2)*4 = 36
        assert_eq!(r.sparse_memory_bytes, 48 + 88 + 36);
        assert!((r.memory_reduction_pct - 100.0 * (1.0 - 172.0 / 220.0)).abs() < 1e-12);
    }

    #[test]
    fn last_layer_payload_is_smaller_than_a_superset() {
        let s = ModelSpec::new(vec![5, 7, 6, 3], 0).unwrap();
        let mut mask = SparseMask::last_layer(&s);
        mask.set(1, Unit::Bias, true);
        let r = report_resources(&s, &mask, &MemoryModel::sgd(8)).unwrap();
        assert!(r.last_layer_payload_bytes < r.sparse_payload_bytes);
    }
}
