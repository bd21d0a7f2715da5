use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::protocol::{AgeMode, ServerConfig, Strategy};
use crate::sim::{DelayMode, SimConfig};
use crate::sparse::DeviceProfile;

/// Synthetic Gaussian-blob dataset. Per class, `train_per_class` samples go
/// to clients, `test_per_class` to the server's test set and
/// `calibration_per_class` to the parameter-selection calibration set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "defaults::num_classes")]
    pub num_classes: usize,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::train_per_class")]
    pub train_per_class: usize,
    #[serde(default = "defaults::test_per_class")]
    pub test_per_class: usize,
    #[serde(default = "defaults::calibration_per_class")]
    pub calibration_per_class: usize,
    #[serde(default = "defaults::separation")]
    pub class_separation: f64,
    #[serde(default = "defaults::sigma")]
    pub noise_sigma: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_classes: defaults::num_classes(),
            dim: defaults::dim(),
            train_per_class: defaults::train_per_class(),
            test_per_class: defaults::test_per_class(),
            calibration_per_class: defaults::calibration_per_class(),
            class_separation: defaults::separation(),
            noise_sigma: defaults::sigma(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateScheme {
    /// `full` for sync, `sparse` for every other strategy.
    Auto,
    Sparse,
    Full,
    LastLayer,
}

/// A single experiment, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    /// Buffer capacity B; required for `ftte` and `fedbuff`.
    #[serde(default)]
    pub buffer: Option<usize>,
    #[serde(default = "defaults::num_clients")]
    pub num_clients: usize,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// Defaults to `batch_size`.
    #[serde(default)]
    pub min_samples_per_client: Option<usize>,

    #[serde(default)]
    pub dataset: DatasetConfig,
    /// Hidden layer widths; input and output widths come from the dataset.
    #[serde(default = "defaults::hidden")]
    pub hidden_layers: Vec<usize>,

    #[serde(default = "defaults::straggler_fraction")]
    pub straggler_fraction: f64,
    #[serde(default = "defaults::delay_max")]
    pub straggler_delay_max_s: f64,
    #[serde(default = "defaults::delay_mode")]
    pub delay_mode: DelayMode,
    #[serde(default = "defaults::base_compute")]
    pub base_compute_time_s: f64,

    #[serde(default = "defaults::local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,

    #[serde(default = "defaults::age_mode")]
    pub age_mode: AgeMode,
    #[serde(default = "defaults::half")]
    pub fedbuff_exponent: f64,
    #[serde(default = "defaults::async_mixing")]
    pub async_mixing: f64,
    #[serde(default = "defaults::half")]
    pub async_exponent: f64,
    #[serde(default = "defaults::one")]
    pub server_lr: f64,
    #[serde(default)]
    pub weight_by_samples: bool,

    #[serde(default = "defaults::update_scheme")]
    pub update_scheme: UpdateScheme,
    #[serde(default)]
    pub memory_budget_bytes: Option<u64>,
    /// Per-device budgets; the smallest one constrains the shared mask.
    #[serde(default)]
    pub device_profiles: Vec<DeviceProfile>,
    #[serde(default)]
    pub optimizer_state_multiplier: u64,
    #[serde(default = "defaults::calibration_batches")]
    pub calibration_batches: usize,

    #[serde(default = "defaults::target")]
    pub target_accuracy: f64,
    #[serde(default = "defaults::max_steps")]
    pub max_steps: u64,
    #[serde(default)]
    pub max_sim_time_s: Option<f64>,
    #[serde(default = "defaults::one_u64")]
    pub eval_every_aggregations: u64,
    #[serde(default = "defaults::eval_batch_size")]
    pub eval_batch_size: usize,
    #[serde(default = "defaults::yes")]
    pub count_downloads: bool,

    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::repeats")]
    pub repeats: usize,
    #[serde(default = "defaults::one_usize")]
    pub workers: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
}

mod defaults {
    use super::*;

    pub fn num_classes() -> usize {
        2
    }
    pub fn dim() -> usize {
        20
    }
    pub fn train_per_class() -> usize {
        2000
    }
    pub fn test_per_class() -> usize {
        250
    }
    pub fn calibration_per_class() -> usize {
        64
    }
    pub fn separation() -> f64 {
        3.0
    }
    pub fn sigma() -> f64 {
        1.0
    }
    pub fn num_clients() -> usize {
        20
    }
    pub fn alpha() -> f64 {
        1.0
    }
    pub fn hidden() -> Vec<usize> {
        vec![32, 16]
    }
    pub fn straggler_fraction() -> f64 {
        0.5
    }
    pub fn delay_max() -> f64 {
        30.0
    }
    pub fn delay_mode() -> DelayMode {
        DelayMode::Uniform
    }
    pub fn base_compute() -> f64 {
        1.0
    }
    pub fn local_epochs() -> usize {
        3
    }
    pub fn lr() -> f64 {
        0.1
    }
    pub fn batch_size() -> usize {
        8
    }
    pub fn age_mode() -> AgeMode {
        AgeMode::ReceivedStep
    }
    pub fn half() -> f64 {
        0.5
    }
    pub fn async_mixing() -> f64 {
        0.6
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn update_scheme() -> UpdateScheme {
        UpdateScheme::Auto
    }
    pub fn calibration_batches() -> usize {
        8
    }
    pub fn target() -> f64 {
        0.9
    }
    pub fn max_steps() -> u64 {
        10_000
    }
    pub fn one_u64() -> u64 {
        1
    }
    pub fn one_usize() -> usize {
        1
    }
    pub fn eval_batch_size() -> usize {
        256
    }
    pub fn yes() -> bool {
        true
    }
    pub fn repeats() -> usize {
        3
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, applies `key=value` overrides and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if overrides.is_empty() {
            return Self::from_json(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())));
        }
        let mut value: Value = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "{}: line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.strategy.is_buffered() && self.buffer.is_none() {
            return bad(format!(
                "missing required key `buffer` for strategy `{}`",
                self.strategy
            ));
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        let d = &self.dataset;
        if d.num_classes < 2 || d.dim == 0 {
            return bad("dataset needs >= 2 classes and dim >= 1".into());
        }
        if d.train_per_class == 0 || d.test_per_class == 0 {
            return bad("train_per_class and test_per_class must be >= 1".into());
        }
        let needs_calibration = matches!(self.update_scheme, UpdateScheme::Sparse)
            || (self.update_scheme == UpdateScheme::Auto && self.strategy != Strategy::Sync);
        if needs_calibration && self.selection_budget().is_some() && d.calibration_per_class == 0 {
            return bad("sparse selection needs calibration_per_class >= 1".into());
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be >= 1".into());
        }
        if self.min_samples() == 0 {
            return bad("min_samples_per_client must be >= 1".into());
        }
        if self.local_epochs == 0 {
            return bad("local_epochs must be >= 1".into());
        }
        if self.repeats == 0 || self.workers == 0 {
            return bad("repeats and workers must be >= 1".into());
        }
        if !(self.target_accuracy >= 0.0) {
            return bad(format!(
                "target_accuracy {} must be >= 0",
                self.target_accuracy
            ));
        }
        if self.calibration_batches == 0 {
            return bad("calibration_batches must be >= 1".into());
        }
        self.sim_config(self.seed).validate()
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples_per_client.unwrap_or(self.batch_size)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.dataset.dim];
        dims.extend(&self.hidden_layers);
        dims.push(self.dataset.num_classes);
        dims
    }

    /// Budget that constrains the shared mask, `None` when unconstrained.
    pub fn selection_budget(&self) -> Option<u64> {
        crate::sparse::global_budget(&self.device_profiles).or(self.memory_budget_bytes)
    }

    pub fn resolved_scheme(&self) -> UpdateScheme {
        match (self.update_scheme, self.strategy) {
            (UpdateScheme::Auto, Strategy::Sync) => UpdateScheme::Full,
            (UpdateScheme::Auto, _) => UpdateScheme::Sparse,
            (s, _) => s,
        }
    }

    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            strategy: self.strategy,
            buffer_capacity: self.buffer.unwrap_or(1),
            age_mode: self.age_mode,
            fedbuff_exponent: self.fedbuff_exponent,
            async_mixing: self.async_mixing,
            async_exponent: self.async_exponent,
            server_lr: self.server_lr,
            weight_by_samples: self.weight_by_samples,
        }
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            server: self.server_config(),
            num_clients: self.num_clients,
            straggler_fraction: self.straggler_fraction,
            straggler_delay_max_s: self.straggler_delay_max_s,
            delay_mode: self.delay_mode,
            base_compute_time_s: self.base_compute_time_s,
            local_epochs: self.local_epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            target_accuracy: self.target_accuracy,
            max_steps: self.max_steps,
            max_sim_time_s: self.max_sim_time_s,
            eval_every_aggregations: self.eval_every_aggregations,
            eval_batch_size: self.eval_batch_size,
            count_downloads: self.count_downloads,
            seed,
            workers: self.workers,
        }
    }

    /// Seed of repeat `r`.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }
}

/// Applies one `dotted.key=value` override. The value is parsed as JSON and
/// falls back to a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!(
            "override `{assignment}` has an empty key"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::Config(format!(
                "override `{key}`: `{part}` is not inside an object"
            ))
        })?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| {
        Error::Config(format!("override `{key}` does not address an object field"))
    })?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
