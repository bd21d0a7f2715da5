use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, UpdateScheme};
use crate::data::{dirichlet_partition, make_blobs, LabeledDataset, Partition, PartitionSpec};
use crate::error::{Error, Result};
use crate::model::init_params;
use crate::protocol::Strategy;
use crate::rng::{derive_seed, stream};
use crate::sim::{
    run_simulation_with_model, steps_to_target, EventKind, SimInputs, SimTrace, StopReason,
};
use crate::sparse::{
    estimate_contribution, select_parameters, ContributionConfig, MemoryModel, SparseMask,
};
use crate::tensor::{ModelSpec, ParamSet};

/// Seeds of one repeat, all derived from the repeat seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub dataset: u64,
    pub partition: u64,
    pub model_init: u64,
    pub selection: u64,
}

impl RunSeeds {
    pub fn new(run: u64) -> Self {
        RunSeeds {
            run,
            dataset: derive_seed(run, &[stream::DATASET]),
            partition: derive_seed(run, &[stream::PARTITION]),
            model_init: derive_seed(run, &[stream::MODEL_INIT]),
            selection: derive_seed(run, &[stream::SELECTION]),
        }
    }
}

/// Everything a simulation needs, built from a config and a repeat index.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seeds: RunSeeds,
    pub spec: ModelSpec,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub calibration: Option<LabeledDataset>,
    pub partition: Partition,
    pub initial: ParamSet,
    pub memory_model: MemoryModel,
    pub mask: SparseMask,
}

impl Prepared {
    pub fn inputs(&self) -> SimInputs<'_> {
        SimInputs {
            train: &self.train,
            test: &self.test,
            partition: &self.partition,
            initial: &self.initial,
            mask: &self.mask,
        }
    }
}

pub fn memory_model(cfg: &ExperimentConfig) -> MemoryModel {
    MemoryModel {
        bytes_per_value: 4,
        optimizer_state_multiplier: cfg.optimizer_state_multiplier,
        activation_batch_size: cfg.batch_size as u64,
    }
}

/// Generates data, partitions it, initializes the model and selects the mask.
pub fn prepare(cfg: &ExperimentConfig, repeat: usize) -> Result<Prepared> {
    let seeds = RunSeeds::new(cfg.repeat_seed(repeat));
    let d = &cfg.dataset;
    let all = make_blobs(
        d.num_classes,
        d.dim,
        d.train_per_class + d.test_per_class + d.calibration_per_class,
        d.class_separation,
        d.noise_sigma,
        seeds.dataset,
    )?;
    let mut parts = all
        .split_per_class(&[d.train_per_class, d.test_per_class, d.calibration_per_class])?
        .into_iter();
    let train = parts.next().expect("three parts");
    let test = parts.next().expect("three parts");
    let calibration = if d.calibration_per_class > 0 {
        parts.next()
    } else {
        None
    };

    let partition = dirichlet_partition(
        &train,
        &PartitionSpec {
            num_clients: cfg.num_clients,
            alpha: cfg.alpha,
            seed: seeds.partition,
            min_samples_per_client: cfg.min_samples(),
        },
    )?;
    let spec = ModelSpec::new(cfg.layer_dims(), seeds.model_init)?;
    let initial = init_params(&spec)?;
    let mm = memory_model(cfg);
    let mask = match cfg.resolved_scheme() {
        UpdateScheme::Full | UpdateScheme::Auto => SparseMask::full(&spec),
        UpdateScheme::LastLayer => SparseMask::last_layer(&spec),
        UpdateScheme::Sparse => match cfg.selection_budget() {
            None => SparseMask::full(&spec),
            Some(budget) => {
                let calib = calibration.as_ref().ok_or(Error::EmptyDataset)?;
                let shard = train.len().div_ceil(cfg.num_clients);
                let contrib = ContributionConfig {
                    batch_size: cfg.batch_size,
                    lr: cfg.lr,
                    local_steps: cfg.local_epochs * shard.div_ceil(cfg.batch_size),
                };
                let scores = estimate_contribution(
                    &initial,
                    calib,
                    cfg.calibration_batches,
                    seeds.selection,
                    &contrib,
                )?;
                select_parameters(&scores, &spec, &mm, budget)?
            }
        },
    };
    Ok(Prepared {
        seeds,
        spec,
        train,
        test,
        calibration,
        partition,
        initial,
        memory_model: mm,
        mask,
    })
}

/// Trace-derived metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub steps_to_target: Option<u64>,
    pub sim_time_to_target_s: Option<f64>,
    pub reached: bool,
    pub oscillating: bool,
    pub final_step: u64,
    pub final_sim_time_s: f64,
    pub final_accuracy: Option<f64>,
    pub aggregations: usize,
    pub uploads: usize,
    pub downloads: usize,
    pub upload_bytes: u64,
    pub download_bytes: u64,
    pub mean_upload_payload_bytes: f64,
}

/// Computes [`TraceMetrics`] from trace records only.
pub fn trace_metrics(trace: &SimTrace, target_accuracy: f64) -> Result<TraceMetrics> {
    let t = steps_to_target(trace, target_accuracy)?;
    let last = trace.records.last().ok_or(Error::NoEvals)?;
    let uploads = trace.count(EventKind::ClientFinished);
    Ok(TraceMetrics {
        steps_to_target: t.steps,
        sim_time_to_target_s: t.sim_time_s,
        reached: t.reached(),
        oscillating: t.oscillating,
        final_step: last.step,
        final_sim_time_s: last.sim_time_s,
        final_accuracy: trace.evals().last().and_then(|r| r.accuracy),
        aggregations: trace.count(EventKind::Aggregation),
        uploads,
        downloads: trace.count(EventKind::Dispatch),
        upload_bytes: last.upload_bytes_cum,
        download_bytes: last.download_bytes_cum,
        mean_upload_payload_bytes: if uploads == 0 {
            0.0
        } else {
            last.upload_bytes_cum as f64 / uploads as f64
        },
    })
}

/// One (strategy, repeat) row of a [`SummaryReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: Strategy,
    pub repeat: usize,
    pub seeds: RunSeeds,
    pub target_accuracy: f64,
    pub max_steps: u64,
    pub stop_reason: StopReason,
    pub peak_client_memory_bytes: u64,
    pub mask_density: f64,
    pub trace_file: String,
    #[serde(flatten)]
    pub metrics: TraceMetrics,
}

/// Steps-to-target of one run relative to the FTTE run with the same seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub strategy: Strategy,
    pub repeat: usize,
    /// `steps(strategy) / steps(ftte)`; a lower bound when the strategy
    /// did not reach the target.
    pub ratio: Option<f64>,
    pub cell: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub runs: Vec<RunSummary>,
    #[serde(default)]
    pub speedups: Vec<Speedup>,
}

impl SummaryReport {
    pub fn all_reached(&self) -> bool {
        self.runs.iter().all(|r| r.metrics.reached)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Result of a single repeat.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: SimTrace,
    pub summary: RunSummary,
    pub final_model: ParamSet,
    pub mask: SparseMask,
}

pub fn trace_file_name(strategy: Strategy, repeat: usize) -> String {
    format!("trace_{strategy}_r{repeat}.csv")
}

/// Runs repeat `repeat` of `cfg` without touching the filesystem.
pub fn run_repeat(cfg: &ExperimentConfig, repeat: usize) -> Result<RunOutput> {
    let p = prepare(cfg, repeat)?;
    let sim = cfg.sim_config(p.seeds.run);
    let (trace, final_model) = run_simulation_with_model(&sim, p.inputs())?;
    let metrics = trace_metrics(&trace, cfg.target_accuracy)?;
    let summary = RunSummary {
        strategy: cfg.strategy,
        repeat,
        seeds: p.seeds,
        target_accuracy: cfg.target_accuracy,
        max_steps: cfg.max_steps,
        stop_reason: trace.stop_reason,
        peak_client_memory_bytes: p.mask.memory_cost(&p.memory_model),
        mask_density: p.mask.density(),
        trace_file: trace_file_name(cfg.strategy, repeat),
        metrics,
    };
    Ok(RunOutput {
        trace,
        summary,
        final_model,
        mask: p.mask,
    })
}

/// Runs every repeat and writes traces, `summary.json` and the resolved
/// `config.json` into `out_dir`.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SummaryReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let config_path = out_dir.join("config.json");
    std::fs::write(&config_path, cfg.to_json() + "\n").map_err(|e| Error::io(&config_path, e))?;
    let mut runs = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let out = run_repeat(cfg, r)?;
        out.trace
            .write_csv(&out_dir.join(&out.summary.trace_file))?;
        runs.push(out.summary);
    }
    let report = SummaryReport {
        runs,
        speedups: Vec::new(),
    };
    report.write(&out_dir.join("summary.json"))?;
    Ok(report)
}

/// Output directory: explicit argument, then `out_dir` from the config, then
/// `./runs`.
pub fn resolve_out_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}
