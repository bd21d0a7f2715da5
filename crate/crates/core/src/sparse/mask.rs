use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use std::hash::Hasher;

use crate::error::{Error, Result};
use crate::tensor::{ModelSpec, ParamSet, Unit};

/// Training-memory cost model for a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub bytes_per_value: u64,
    /// Extra parameter-sized buffers per trainable tensor (0 for plain SGD).
    pub optimizer_state_multiplier: u64,
    pub activation_batch_size: u64,
}

impl MemoryModel {
    pub fn sgd(batch_size: usize) -> Self {
        MemoryModel {
            bytes_per_value: 4,
            optimizer_state_multiplier: 0,
            activation_batch_size: batch_size as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub layer_name: String,
    pub unit: Unit,
    pub selected: bool,
}

/// Per-tensor selection of the trainable parameters.
///
/// Entries are ordered `fc0.weight, fc0.bias, fc1.weight, ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseMask {
    layer_dims: Vec<usize>,
    entries: Vec<MaskEntry>,
}

fn unit_index(unit: Unit) -> usize {
    match unit {
        Unit::Weights => 0,
        Unit::Bias => 1,
    }
}

impl SparseMask {
    fn with_all(spec: &ModelSpec, selected: bool) -> Self {
        let entries = (0..spec.num_layers())
            .flat_map(|l| {
                Unit::ALL.into_iter().map(move |unit| MaskEntry {
                    layer_name: ModelSpec::layer_name(l),
                    unit,
                    selected,
                })
            })
            .collect();
        SparseMask {
            layer_dims: spec.layer_dims.clone(),
            entries,
        }
    }

    pub fn empty(spec: &ModelSpec) -> Self {
        Self::with_all(spec, false)
    }

    pub fn full(spec: &ModelSpec) -> Self {
        Self::with_all(spec, true)
    }

    /// Output layer weights and bias only.
    pub fn last_layer(spec: &ModelSpec) -> Self {
        let mut m = Self::empty(spec);
        let last = spec.num_layers() - 1;
        m.set(last, Unit::Weights, true);
        m.set(last, Unit::Bias, true);
        m
    }

    pub fn from_selection(spec: &ModelSpec, selected: &[(usize, Unit)]) -> Self {
        let mut m = Self::empty(spec);
        for &(l, u) in selected {
            m.set(l, u, true);
        }
        m
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn entries(&self) -> &[MaskEntry] {
        &self.entries
    }

    /// Number of selectable tensors.
    pub fn num_units(&self) -> usize {
        self.entries.len()
    }

    /// `(layer, unit)` of entry `i`.
    pub fn unit_at(i: usize) -> (usize, Unit) {
        (i / 2, Unit::ALL[i % 2])
    }

    pub fn index_of(layer: usize, unit: Unit) -> usize {
        layer * 2 + unit_index(unit)
    }

    pub fn is_selected(&self, layer: usize, unit: Unit) -> bool {
        self.entries[Self::index_of(layer, unit)].selected
    }

    pub fn set(&mut self, layer: usize, unit: Unit, selected: bool) {
        self.entries[Self::index_of(layer, unit)].selected = selected;
    }

    pub fn selected(&self) -> impl Iterator<Item = (usize, Unit)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.selected)
            .map(|(i, _)| Self::unit_at(i))
    }

    pub fn num_selected(&self) -> usize {
        self.entries.iter().filter(|e| e.selected).count()
    }

    pub fn tensor_name(layer: usize, unit: Unit) -> String {
        format!("{}.{}", ModelSpec::layer_name(layer), unit.suffix())
    }

    pub fn value_count(&self, layer: usize, unit: Unit) -> usize {
        let (i, o) = (self.layer_dims[layer], self.layer_dims[layer + 1]);
        match unit {
            Unit::Weights => i * o,
            Unit::Bias => o,
        }
    }

    pub fn selected_values(&self) -> usize {
        self.selected().map(|(l, u)| self.value_count(l, u)).sum()
    }

    pub fn total_values(&self) -> usize {
        (0..self.num_layers())
            .flat_map(|l| Unit::ALL.map(|u| (l, u)))
            .map(|(l, u)| self.value_count(l, u))
            .sum()
    }

    /// Fraction of parameter values that are trainable.
    pub fn density(&self) -> f64 {
        self.selected_values() as f64 / self.total_values() as f64
    }

    /// Earliest dense layer with a selected tensor.
    pub fn earliest_selected_layer(&self) -> Option<usize> {
        self.selected().map(|(l, _)| l).next()
    }

    /// Stable 64-bit FNV-1a digest of the layout and selection.
    pub fn id(&self) -> u64 {
        let mut h = FnvHasher::default();
        for d in &self.layer_dims {
            h.write(&(*d as u64).to_le_bytes());
        }
        for e in &self.entries {
            h.write(e.layer_name.as_bytes());
            h.write(&[0, unit_index(e.unit) as u8, e.selected as u8]);
        }
        h.finish()
    }

    pub fn memory_cost(&self, mm: &MemoryModel) -> u64 {
        cost_unchecked(self, mm)
    }

    pub fn check_spec(&self, spec: &ModelSpec) -> Result<()> {
        if self.layer_dims != spec.layer_dims {
            return Err(Error::MaskMismatch(format!(
                "mask built for {:?}, model is {:?}",
                self.layer_dims, spec.layer_dims
            )));
        }
        Ok(())
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let dims = params.layer_dims();
        if self.layer_dims != dims {
            return Err(Error::MaskMismatch(format!(
                "mask built for {:?}, parameters are {:?}",
                self.layer_dims, dims
            )));
        }
        Ok(())
    }
}

fn cost_unchecked(mask: &SparseMask, mm: &MemoryModel) -> u64 {
    let bpv = mm.bytes_per_value;
    let mut bytes = 0u64;
    for (i, e) in mask.entries.iter().enumerate() {
        let (l, u) = SparseMask::unit_at(i);
        let n = mask.value_count(l, u) as u64;
        bytes += if e.selected {
            n * bpv * (2 + mm.optimizer_state_multiplier)
        } else {
            n * bpv
        };
    }
    if let Some(first) = mask.earliest_selected_layer() {
        let width: u64 = mask.layer_dims[first..].iter().map(|&d| d as u64).sum();
        bytes += mm.activation_batch_size * width * bpv;
    }
    bytes
}

/// Client training memory for `mask`: frozen storage of unselected tensors,
/// parameter + gradient + optimizer state for selected tensors, and the
/// activations from the earliest selected layer's input up to the logits.
pub fn memory_cost(mask: &SparseMask, spec: &ModelSpec, mm: &MemoryModel) -> Result<u64> {
    mask.check_spec(spec)?;
    Ok(cost_unchecked(mask, mm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ModelSpec {
        ModelSpec::new(vec![4, 3, 2], 0).unwrap()
    }

    #[test]
    fn empty_mask_costs_frozen_storage() {
        let s = spec();
        let c = memory_cost(&SparseMask::empty(&s), &s, &MemoryModel::sgd(1)).unwrap();
        assert_eq!(c, 23 * 4);
    }

    #[test]
    fn full_mask_hand_count() {
        let s = spec();
        let c = memory_cost(&SparseMask::full(&s), &s, &MemoryModel::sgd(1)).unwrap();
        assert_eq!(c, 23 * 4 * 2 + (4 + 3 + 2) * 4);
        assert_eq!(c, 220);
    }

    #[test]
    fn optimizer_state_and_batch_scale_cost() {
        let s = spec();
        let mm = MemoryModel {
            bytes_per_value: 4,
            optimizer_state_multiplier: 2,
            activation_batch_size: 8,
        };
        let c = memory_cost(&SparseMask::last_layer(&s), &s, &mm).unwrap();
        // fc0 frozen (15), fc1 trainable (8) x (2 + 2), activations 8 x (3 + 2)
        assert_eq!(c, 15 * 4 + 8 * 4 * 4 + 8 * 5 * 4);
    }

    #[test]
    fn mismatched_spec_is_rejected() {
        let s = spec();
        let other = ModelSpec::new(vec![4, 5, 2], 0).unwrap();
        assert!(matches!(
            memory_cost(&SparseMask::full(&s), &other, &MemoryModel::sgd(1)),
            Err(Error::MaskMismatch(_))
        ));
    }

    #[test]
    fn adding_a_tensor_never_lowers_cost() {
        let s = ModelSpec::new(vec![5, 4, 3, 2], 0).unwrap();
        let mm = MemoryModel::sgd(4);
        for bits in 0u32..64 {
            let mut m = SparseMask::empty(&s);
            for i in 0..6 {
                if bits & (1 << i) != 0 {
                    let (l, u) = SparseMask::unit_at(i);
                    m.set(l, u, true);
                }
            }
            let base = m.memory_cost(&mm);
            for i in 0..6 {
                let (l, u) = SparseMask::unit_at(i);
                let mut bigger = m.clone();
                bigger.set(l, u, true);
                assert!(bigger.memory_cost(&mm) >= base);
            }
        }
    }

    #[test]
    fn density_and_id() {
        let s = spec();
        assert_eq!(SparseMask::full(&s).density(), 1.0);
        assert_eq!(SparseMask::empty(&s).density(), 0.0);
        assert!((SparseMask::last_layer(&s).density() - 8.0 / 23.0).abs() < 1e-12);
        assert_ne!(SparseMask::full(&s).id(), SparseMask::last_layer(&s).id());
        assert_eq!(SparseMask::full(&s).id(), SparseMask::full(&s).id());
    }
}
