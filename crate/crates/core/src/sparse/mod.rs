//! Memory-constrained selection of the trainable subset and sparse deltas.

mod delta;
mod mask;
mod select;

pub use delta::{apply_delta, extract_delta, DeltaTensor, SparseDelta, DELTA_MAGIC};
pub use mask::{memory_cost, MaskEntry, MemoryModel, SparseMask};
pub use select::{
    estimate_contribution, global_budget, greedy_select, min_budget, select_parameters,
    ContributionConfig, DeviceProfile,
};
