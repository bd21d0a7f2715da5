//! Deterministic discrete-event simulation of a federated network.
//!
//! Every client holds at most one outstanding job. A job is trained when the
//! client is dispatched (against the global model at that instant) and its
//! upload is delivered at `dispatch time + job time`. Events with equal times
//! are delivered in insertion order. Client training may run on a worker
//! pool; results are committed in event order, so the worker count never
//! changes the trace.

mod events;
mod metrics;
mod trace;

pub use events::{EventQueue, SimEvent};
pub use metrics::{steps_to_target, TargetResult};
pub use trace::{
    fmt_g6, parse_trace_csv, EventKind, SimTrace, StopReason, TraceRecord, TRACE_HEADER,
};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::model::{evaluate, Evaluation};
use crate::protocol::{
    client_local_train, ClientShard, ClientUpdate, ServerConfig, ServerState, Strategy,
};
use crate::rng::{derive_seed, stream, Rng};
use crate::sparse::{extract_delta, SparseDelta, SparseMask};
use crate::tensor::{Batch, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    /// Straggler delay uniform on `(0, max]`.
    Uniform,
    /// Straggler delay exactly `max`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub client_id: usize,
    pub base_compute_time_s: f64,
    pub is_straggler: bool,
    pub straggler_delay_max_s: f64,
    pub seed: u64,
}

/// Duration of one local training job.
pub fn sample_job_time(profile: &ClientProfile, mode: DelayMode, rng: &mut Rng) -> f64 {
    let delay = if profile.is_straggler {
        match mode {
            DelayMode::Uniform => profile.straggler_delay_max_s * rng.uniform_open(),
            DelayMode::Fixed => profile.straggler_delay_max_s,
        }
    } else {
        0.0
    };
    profile.base_compute_time_s + delay
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub server: ServerConfig,
    pub num_clients: usize,
    pub straggler_fraction: f64,
    pub straggler_delay_max_s: f64,
    pub delay_mode: DelayMode,
    pub base_compute_time_s: f64,
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub target_accuracy: f64,
    pub max_steps: u64,
    pub max_sim_time_s: Option<f64>,
    pub eval_every_aggregations: u64,
    pub eval_batch_size: usize,
    pub count_downloads: bool,
    pub seed: u64,
    pub workers: usize,
}

impl SimConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_clients == 0 {
            return bad("num_clients must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.straggler_fraction) {
            return bad(format!(
                "straggler_fraction {} not in [0, 1]",
                self.straggler_fraction
            ));
        }
        if !(self.straggler_delay_max_s >= 0.0) || !(self.base_compute_time_s > 0.0) {
            return bad("compute time must be > 0 and delay >= 0".into());
        }
        if self.batch_size == 0 || self.eval_every_aggregations == 0 || self.eval_batch_size == 0 {
            return bad(
                "batch_size, eval_every_aggregations and eval_batch_size must be >= 1".into(),
            );
        }
        if !(self.lr >= 0.0) {
            return bad(format!("lr must be >= 0, got {}", self.lr));
        }
        if self.server.strategy.is_buffered() && self.server.buffer_capacity == 0 {
            return bad("buffer must be >= 1".into());
        }
        if self.server.strategy.is_buffered() && self.server.buffer_capacity > self.num_clients {
            return bad(format!(
                "buffer {} exceeds num_clients {}: aggregation could never trigger",
                self.server.buffer_capacity, self.num_clients
            ));
        }
        Ok(())
    }

    /// Straggler flags: a seeded permutation of clients, the first
    /// `round(fraction * n)` of which straggle. Raising the fraction only adds
    /// stragglers.
    pub fn client_profiles(&self) -> Vec<ClientProfile> {
        let mut order: Vec<usize> = (0..self.num_clients).collect();
        Rng::new(derive_seed(self.seed, &[stream::STRAGGLERS])).shuffle(&mut order);
        let k = (self.straggler_fraction * self.num_clients as f64).round() as usize;
        let mut straggler = vec![false; self.num_clients];
        for &c in &order[..k.min(self.num_clients)] {
            straggler[c] = true;
        }
        (0..self.num_clients)
            .map(|c| ClientProfile {
                client_id: c,
                base_compute_time_s: self.base_compute_time_s,
                is_straggler: straggler[c],
                straggler_delay_max_s: self.straggler_delay_max_s,
                seed: derive_seed(self.seed, &[stream::JOB_TIME, c as u64]),
            })
            .collect()
    }

    /// Duration of `client`'s `job`-th training job.
    pub fn job_time(&self, profile: &ClientProfile, job: u64) -> f64 {
        let mut rng = Rng::new(derive_seed(profile.seed, &[job]));
        sample_job_time(profile, self.delay_mode, &mut rng)
    }

    pub fn training_seed(&self, client: usize, job: u64) -> u64 {
        derive_seed(self.seed, &[stream::TRAINING, client as u64, job])
    }
}

/// Data and starting point for one simulation.
#[derive(Debug, Clone, Copy)]
pub struct SimInputs<'a> {
    pub train: &'a LabeledDataset,
    pub test: &'a LabeledDataset,
    pub partition: &'a Partition,
    pub initial: &'a ParamSet,
    pub mask: &'a SparseMask,
}

struct Pending {
    base_version: u64,
    base: Arc<ParamSet>,
    local: ParamSet,
    num_samples: usize,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    inputs: SimInputs<'a>,
    profiles: Vec<ClientProfile>,
    server: ServerState,
    test_batches: Vec<Batch>,
    queue: EventQueue,
    pending: Vec<Option<Pending>>,
    jobs: Vec<u64>,
    round: Vec<ClientUpdate>,
    records: Vec<TraceRecord>,
    upload_bytes: u64,
    download_bytes: u64,
    upload_size: u64,
    download_size: u64,
    pool: Option<rayon::ThreadPool>,
}

enum Flow {
    Continue,
    Stop(StopReason),
}

impl<'a> Engine<'a> {
    fn record(
        &mut self,
        event: EventKind,
        time: f64,
        client: Option<usize>,
        eval: Option<Evaluation>,
    ) {
        self.records.push(TraceRecord {
            step: self.server.step,
            sim_time_s: time,
            event,
            version: self.server.version,
            accuracy: eval.map(|e| e.accuracy),
            loss: eval.map(|e| e.mean_loss),
            upload_bytes_cum: self.upload_bytes,
            download_bytes_cum: self.download_bytes,
            client,
        });
    }

    fn evaluate(&mut self, time: f64) -> Result<Flow> {
        let e = evaluate(&self.server.global, &self.test_batches)?;
        self.record(EventKind::Eval, time, None, Some(e));
        if e.accuracy >= self.cfg.target_accuracy {
            Ok(Flow::Stop(StopReason::TargetReached))
        } else {
            Ok(Flow::Continue)
        }
    }

    fn after_aggregation(&mut self, time: f64) -> Result<Flow> {
        self.record(EventKind::Aggregation, time, None, None);
        if self
            .server
            .version
            .is_multiple_of(self.cfg.eval_every_aggregations)
        {
            return self.evaluate(time);
        }
        Ok(Flow::Continue)
    }

    fn train(&self, global: &ParamSet, client: usize, job: u64) -> Result<(ParamSet, usize)> {
        let shard = ClientShard {
            dataset: self.inputs.train,
            partition: self.inputs.partition,
            client_id: client,
            batch_size: self.cfg.batch_size,
        };
        client_local_train(
            global,
            self.inputs.mask,
            &shard,
            self.cfg.local_epochs,
            self.cfg.lr as f32,
            self.cfg.training_seed(client, job),
        )
    }

    fn dispatch(&mut self, clients: &[usize], time: f64) -> Result<Flow> {
        let mut sent = Vec::with_capacity(clients.len());
        let mut stop = None;
        for &c in clients {
            if self.cfg.count_downloads {
                if self.server.step >= self.cfg.max_steps {
                    stop = Some(StopReason::MaxSteps);
                    break;
                }
                self.server.step += 1;
            }
            self.download_bytes += self.download_size;
            self.record(EventKind::Dispatch, time, Some(c), None);
            sent.push(c);
        }
        if let Some(reason) = stop {
            return Ok(Flow::Stop(reason));
        }

        let base = Arc::new(self.server.global.clone());
        let work: Vec<(usize, u64)> = sent.iter().map(|&c| (c, self.jobs[c])).collect();
        let results: Vec<Result<(ParamSet, usize)>> = match &self.pool {
            Some(pool) => pool.install(|| {
                work.par_iter()
                    .map(|&(c, job)| self.train(&base, c, job))
                    .collect()
            }),
            None => work
                .iter()
                .map(|&(c, job)| self.train(&base, c, job))
                .collect(),
        };
        for ((c, job), res) in work.into_iter().zip(results) {
            let (local, num_samples) = res?;
            self.pending[c] = Some(Pending {
                base_version: self.server.version,
                base: Arc::clone(&base),
                local,
                num_samples,
            });
            let finish = time + self.cfg.job_time(&self.profiles[c], job);
            self.queue.push(finish, c, job);
            self.jobs[c] += 1;
        }
        Ok(Flow::Continue)
    }

    fn on_arrival(&mut self, ev: SimEvent) -> Result<Flow> {
        if self.server.step >= self.cfg.max_steps {
            return Ok(Flow::Stop(StopReason::MaxSteps));
        }
        let job = self.pending[ev.client]
            .take()
            .ok_or_else(|| Error::Config(format!("client {} has no outstanding job", ev.client)))?;
        self.server.step += 1;
        let update = ClientUpdate {
            client_id: ev.client,
            delta: extract_delta(&job.local, &job.base, self.inputs.mask)?,
            base_version: job.base_version,
            received_step: self.server.step,
            num_samples: job.num_samples,
        };
        self.upload_bytes += self.upload_size;
        self.record(EventKind::ClientFinished, ev.time_s, Some(ev.client), None);

        let t = ev.time_s;
        match self.server.config.strategy {
            Strategy::Ftte | Strategy::Fedbuff => {
                if !self.server.receive(update)? {
                    return Ok(Flow::Continue);
                }
                let idle: Vec<usize> = self.server.buffer.iter().map(|u| u.client_id).collect();
                self.server.aggregate()?;
                if let Flow::Stop(r) = self.after_aggregation(t)? {
                    return Ok(Flow::Stop(r));
                }
                self.dispatch(&idle, t)
            }
            Strategy::Async => {
                self.server.apply_async(&update)?;
                if let Flow::Stop(r) = self.after_aggregation(t)? {
                    return Ok(Flow::Stop(r));
                }
                self.dispatch(&[ev.client], t)
            }
            Strategy::Sync => {
                self.round.push(update);
                if self.round.len() < self.cfg.num_clients {
                    return Ok(Flow::Continue);
                }
                let round = std::mem::take(&mut self.round);
                self.server.aggregate_sync(&round, self.cfg.num_clients)?;
                if let Flow::Stop(r) = self.after_aggregation(t)? {
                    return Ok(Flow::Stop(r));
                }
                let all: Vec<usize> = (0..self.cfg.num_clients).collect();
                self.dispatch(&all, t)
            }
        }
    }

    fn run(mut self) -> Result<(SimTrace, ParamSet)> {
        let stop = 'run: {
            if let Flow::Stop(r) = self.evaluate(0.0)? {
                break 'run r;
            }
            let all: Vec<usize> = (0..self.cfg.num_clients).collect();
            if let Flow::Stop(r) = self.dispatch(&all, 0.0)? {
                break 'run r;
            }
            loop {
                let Some(ev) = self.queue.pop() else {
                    break 'run StopReason::QueueExhausted;
                };
                if self.cfg.max_sim_time_s.is_some_and(|cap| ev.time_s > cap) {
                    break 'run StopReason::MaxSimTime;
                }
                if let Flow::Stop(r) = self.on_arrival(ev)? {
                    break 'run r;
                }
            }
        };
        let trace = SimTrace {
            records: self.records,
            stop_reason: stop,
        };
        Ok((trace, self.server.global))
    }
}

/// Runs one experiment to the target accuracy or a step / time limit.
pub fn run_simulation(cfg: &SimConfig, inputs: SimInputs<'_>) -> Result<SimTrace> {
    run_simulation_with_model(cfg, inputs).map(|(trace, _)| trace)
}

/// Like [`run_simulation`] but also returns the final global model.
pub fn run_simulation_with_model(
    cfg: &SimConfig,
    inputs: SimInputs<'_>,
) -> Result<(SimTrace, ParamSet)> {
    cfg.validate()?;
    if inputs.partition.num_clients() != cfg.num_clients {
        return Err(Error::Config(format!(
            "partition has {} clients, config has {}",
            inputs.partition.num_clients(),
            cfg.num_clients
        )));
    }
    inputs.mask.check_params(inputs.initial)?;
    let server = ServerState::new(inputs.initial.clone(), inputs.mask.clone(), cfg.server)?;
    let upload_size = SparseDelta::encoded_len_for(inputs.mask) as u64;
    let download_size = match cfg.server.strategy {
        Strategy::Sync => {
            let full = SparseMask::full(&crate::tensor::ModelSpec {
                layer_dims: inputs.mask.layer_dims().to_vec(),
                init_seed: 0,
            });
            SparseDelta::encoded_len_for(&full) as u64
        }
        _ => upload_size,
    };
    let pool = if cfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?,
        )
    } else {
        None
    };
    let engine = Engine {
        cfg,
        inputs,
        profiles: cfg.client_profiles(),
        server,
        test_batches: inputs.test.batches(cfg.eval_batch_size)?,
        queue: EventQueue::default(),
        pending: (0..cfg.num_clients).map(|_| None).collect(),
        jobs: vec![0; cfg.num_clients],
        round: Vec::new(),
        records: Vec::new(),
        upload_bytes: 0,
        download_bytes: 0,
        upload_size,
        download_size,
        pool,
    };
    engine.run()
}
