use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::staleness::{
    compute_age, compute_variance, polynomial_staleness, staleness_weight, StalenessWeight,
};
use crate::sparse::{SparseDelta, SparseMask};
use crate::tensor::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Buffered, age x variance staleness.
    Ftte,
    /// Wait for every client, sample-count weighted mean.
    Sync,
    /// Mix each arrival into the global model.
    Async,
    /// Buffered, age-only polynomial staleness.
    Fedbuff,
}

impl Strategy {
    pub fn is_buffered(self) -> bool {
        matches!(self, Strategy::Ftte | Strategy::Fedbuff)
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ftte => "ftte",
            Strategy::Sync => "sync",
            Strategy::Async => "async",
            Strategy::Fedbuff => "fedbuff",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ftte" => Ok(Strategy::Ftte),
            "sync" => Ok(Strategy::Sync),
            "async" => Ok(Strategy::Async),
            "fedbuff" => Ok(Strategy::Fedbuff),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

/// How the age of a buffered update is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeMode {
    /// Server steps since the update arrived.
    ReceivedStep,
    /// Aggregations since the client's base model.
    VersionLag,
}

/// A masked delta plus provenance, as held in the server buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub delta: SparseDelta,
    pub base_version: u64,
    pub received_step: u64,
    pub num_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub strategy: Strategy,
    pub buffer_capacity: usize,
    pub age_mode: AgeMode,
    pub fedbuff_exponent: f64,
    pub async_mixing: f64,
    pub async_exponent: f64,
    pub server_lr: f64,
    /// Multiply buffered staleness weights by client sample counts.
    pub weight_by_samples: bool,
}

impl ServerConfig {
    pub fn new(strategy: Strategy, buffer_capacity: usize) -> Self {
        ServerConfig {
            strategy,
            buffer_capacity,
            age_mode: AgeMode::ReceivedStep,
            fedbuff_exponent: 0.5,
            async_mixing: 0.6,
            async_exponent: 0.5,
            server_lr: 1.0,
            weight_by_samples: false,
        }
    }
}

/// Result of one aggregation: per-update staleness and normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregation {
    pub version: u64,
    pub staleness: Vec<StalenessWeight>,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub global: ParamSet,
    /// Incremented by every aggregation.
    pub version: u64,
    /// Communication steps observed so far.
    pub step: u64,
    pub buffer: Vec<ClientUpdate>,
    pub mask: SparseMask,
    pub config: ServerConfig,
}

impl ServerState {
    pub fn new(global: ParamSet, mask: SparseMask, config: ServerConfig) -> Result<Self> {
        mask.check_params(&global)?;
        if config.strategy.is_buffered() && config.buffer_capacity == 0 {
            return Err(Error::Config("buffer capacity must be >= 1".into()));
        }
        Ok(ServerState {
            global,
            version: 0,
            step: 0,
            buffer: Vec::new(),
            mask,
            config,
        })
    }

    /// Buffers `update`; returns true when the buffer is now full.
    pub fn receive(&mut self, update: ClientUpdate) -> Result<bool> {
        update.delta.check_mask(&self.mask)?;
        if update.base_version > self.version {
            return Err(Error::Config(format!(
                "update based on version {} but server is at {}",
                update.base_version, self.version
            )));
        }
        self.buffer.push(update);
        Ok(self.buffer.len() >= self.config.buffer_capacity)
    }

    fn age(&self, update: &ClientUpdate) -> Result<u64> {
        match self.config.age_mode {
            AgeMode::ReceivedStep => compute_age(update, self.step),
            AgeMode::VersionLag => Ok(self.version.saturating_sub(update.base_version)),
        }
    }

    /// FTTE aggregation: weights `1 / (1 + age * var)`, normalized.
    pub fn aggregate_ftte(&mut self) -> Result<Aggregation> {
        self.aggregate_buffered(|_, age, var| staleness_weight(age, var))
    }

    /// Age-only aggregation: weights `(1 + age)^-exponent`, normalized.
    pub fn aggregate_fedbuff(&mut self) -> Result<Aggregation> {
        let e = self.config.fedbuff_exponent;
        self.aggregate_buffered(move |_, age, _| polynomial_staleness(age, e))
    }

    /// Dispatches to the configured buffered rule.
    pub fn aggregate(&mut self) -> Result<Aggregation> {
        match self.config.strategy {
            crate::protocol::Strategy::Fedbuff => self.aggregate_fedbuff(),
            _ => self.aggregate_ftte(),
        }
    }

    fn aggregate_buffered(
        &mut self,
        rule: impl Fn(&ClientUpdate, u64, f64) -> f64,
    ) -> Result<Aggregation> {
        let capacity = self.config.buffer_capacity;
        if self.buffer.len() != capacity {
            return Err(Error::BufferNotFull {
                len: self.buffer.len(),
                capacity,
            });
        }
        let mut staleness = Vec::with_capacity(capacity);
        let mut raw = Vec::with_capacity(capacity);
        for u in &self.buffer {
            let age = self.age(u)?;
            let variance = compute_variance(u, &self.global, &self.mask)?;
            let weight = rule(u, age, variance);
            staleness.push(StalenessWeight {
                client_id: u.client_id,
                age,
                variance,
                weight,
            });
            raw.push(if self.config.weight_by_samples {
                weight * u.num_samples as f64
            } else {
                weight
            });
        }
        let lambdas = normalize(&raw);
        let updates = std::mem::take(&mut self.buffer);
        let deltas: Vec<&SparseDelta> = updates.iter().map(|u| &u.delta).collect();
        self.apply_combination(&deltas, &lambdas, self.config.server_lr);
        self.version += 1;
        Ok(Aggregation {
            version: self.version,
            staleness,
            lambdas,
        })
    }

    /// Synchronous FedAvg over one update per client `0..num_clients`,
    /// weighted by sample counts.
    pub fn aggregate_sync(
        &mut self,
        updates: &[ClientUpdate],
        num_clients: usize,
    ) -> Result<Aggregation> {
        let mut seen = vec![false; num_clients];
        for u in updates {
            u.delta.check_mask(&self.mask)?;
            match seen.get_mut(u.client_id) {
                Some(s) => *s = true,
                None => {
                    return Err(Error::UnknownClient {
                        client_id: u.client_id,
                        num_clients,
                    })
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::MissingClient(missing));
        }
        let lambdas = normalize(
            &updates
                .iter()
                .map(|u| u.num_samples as f64)
                .collect::<Vec<_>>(),
        );
        let deltas: Vec<&SparseDelta> = updates.iter().map(|u| &u.delta).collect();
        self.apply_combination(&deltas, &lambdas, 1.0);
        self.version += 1;
        Ok(Aggregation {
            version: self.version,
            staleness: Vec::new(),
            lambdas,
        })
    }

    /// Asynchronous mixing: `global += beta * (1 + lag)^-a * delta`.
    pub fn apply_async(&mut self, update: &ClientUpdate) -> Result<Aggregation> {
        update.delta.check_mask(&self.mask)?;
        let lag = self.version.saturating_sub(update.base_version);
        let s = polynomial_staleness(lag, self.config.async_exponent);
        let factor = self.config.async_mixing * s;
        self.apply_combination(&[&update.delta], &[1.0], factor);
        self.version += 1;
        Ok(Aggregation {
            version: self.version,
            staleness: vec![StalenessWeight {
                client_id: update.client_id,
                age: lag,
                variance: 0.0,
                weight: s,
            }],
            lambdas: vec![1.0],
        })
    }

    /// `global += scale * sum_i lambda_i * delta_i` on masked tensors, accumulated in f64.
    fn apply_combination(&mut self, deltas: &[&SparseDelta], lambdas: &[f64], scale: f64) {
        let combined = combine_deltas(deltas, lambdas);
        for (values, (l, u)) in combined
            .iter()
            .zip(self.mask.selected().collect::<Vec<_>>())
        {
            for (p, &d) in self
                .global
                .tensor_mut(l, u)
                .data_mut()
                .iter_mut()
                .zip(values)
            {
                *p = (*p as f64 + scale * d) as f32;
            }
        }
    }
}

/// `sum_i lambda_i * delta_i` per tensor, in `f64`.
pub(crate) fn combine_deltas(deltas: &[&SparseDelta], lambdas: &[f64]) -> Vec<Vec<f64>> {
    let Some(first) = deltas.first() else {
        return Vec::new();
    };
    let mut out: Vec<Vec<f64>> = first
        .tensors
        .iter()
        .map(|t| vec![0.0; t.values.len()])
        .collect();
    for (d, &lam) in deltas.iter().zip(lambdas) {
        for (acc, t) in out.iter_mut().zip(&d.tensors) {
            for (a, &v) in acc.iter_mut().zip(&t.values) {
                *a += lam * v as f64;
            }
        }
    }
    out
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        raw.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::sparse::{extract_delta, DeltaTensor};
    use crate::tensor::{ModelSpec, Unit};

    fn scalar_setup() -> (ModelSpec, SparseMask) {
        let spec = ModelSpec::new(vec![1, 1], 0).unwrap();
        let mask = SparseMask::from_selection(&spec, &[(0, Unit::Bias)]);
        (spec, mask)
    }

    fn scalar_update(
        mask: &SparseMask,
        client_id: usize,
        v: f32,
        received_step: u64,
        n: usize,
    ) -> ClientUpdate {
        ClientUpdate {
            client_id,
            delta: SparseDelta {
                mask_id: mask.id(),
                tensors: vec![DeltaTensor {
                    name: "fc0.bias".into(),
                    values: vec![v],
                }],
            },
            base_version: 0,
            received_step,
            num_samples: n,
        }
    }

    #[test]
    fn receive_signals_full_buffer() {
        let (spec, mask) = scalar_setup();
        let mut s = ServerState::new(
            ParamSet::zeros(&spec),
            mask.clone(),
            ServerConfig::new(Strategy::Ftte, 2),
        )
        .unwrap();
        assert!(!s.receive(scalar_update(&mask, 0, 1.0, 0, 1)).unwrap());
        assert!(matches!(
            s.aggregate_ftte(),
            Err(Error::BufferNotFull {
                len: 1,
                capacity: 2
            })
        ));
        assert!(s.receive(scalar_update(&mask, 1, 1.0, 0, 1)).unwrap());
    }

    #[test]
    fn identical_deltas_move_global_by_delta() {
        let spec = ModelSpec::new(vec![3, 2], 1).unwrap();
        let global = init_params(&spec).unwrap();
        let local = init_params(&ModelSpec::new(vec![3, 2], 2).unwrap()).unwrap();
        let mask = SparseMask::full(&spec);
        let delta = extract_delta(&local, &global, &mask).unwrap();
        let mut s = ServerState::new(
            global.clone(),
            mask.clone(),
            ServerConfig::new(Strategy::Ftte, 3),
        )
        .unwrap();
        for (i, step) in [(0, 1), (1, 4), (2, 9)] {
            s.step = step;
            s.receive(ClientUpdate {
                client_id: i,
                delta: delta.clone(),
                base_version: 0,
                received_step: step,
                num_samples: 1,
            })
            .unwrap();
        }
        let agg = s.aggregate_ftte().unwrap();
        assert!((agg.lambdas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in s.global.layers[0]
            .weights
            .data()
            .iter()
            .zip(local.layers[0].weights.data())
        {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(s.version, 1);
        assert!(s.buffer.is_empty());
    }

    #[test]
    fn hand_computed_lambdas() {
        // Update 1: age 0. Update 2: age 3, variance 1 (values {1, -1} on a 2-vector).
        let spec = ModelSpec::new(vec![1, 2], 0).unwrap();
        let mask = SparseMask::from_selection(&spec, &[(0, Unit::Bias)]);
        let mut s = ServerState::new(
            ParamSet::zeros(&spec),
            mask.clone(),
            ServerConfig::new(Strategy::Ftte, 2),
        )
        .unwrap();
        let mk = |id, values: Vec<f32>, step| ClientUpdate {
            client_id: id,
            delta: SparseDelta {
                mask_id: mask.id(),
                tensors: vec![DeltaTensor {
                    name: "fc0.bias".into(),
                    values,
                }],
            },
            base_version: 0,
            received_step: step,
            num_samples: 1,
        };
        s.receive(mk(1, vec![1.0, -1.0], 2)).unwrap();
        s.receive(mk(0, vec![0.5, 0.5], 5)).unwrap();
        s.step = 5;
        let agg = s.aggregate_ftte().unwrap();
        assert_eq!(agg.staleness[0].age, 3);
        assert_eq!(agg.staleness[0].variance, 1.0);
        assert_eq!(agg.staleness[0].weight, 0.25);
        assert_eq!(agg.staleness[1].weight, 1.0);
        assert_eq!(agg.lambdas, vec![0.2, 0.8]);
    }

    #[test]
    fn fedbuff_weights() {
        let (spec, mask) = scalar_setup();
        let mut s = ServerState::new(
            ParamSet::zeros(&spec),
            mask.clone(),
            ServerConfig::new(Strategy::Fedbuff, 2),
        )
        .unwrap();
        s.receive(scalar_update(&mask, 0, 0.3, 1, 1)).unwrap();
        s.receive(scalar_update(&mask, 1, 0.6, 4, 1)).unwrap();
        s.step = 4;
        let agg = s.aggregate_fedbuff().unwrap();
        assert_eq!(agg.staleness[0].weight, 0.5);
        assert!((agg.lambdas[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((agg.lambdas[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn clock_regression_is_reported() {
        let (spec, mask) = scalar_setup();
        let mut s = ServerState::new(
            ParamSet::zeros(&spec),
            mask.clone(),
            ServerConfig::new(Strategy::Ftte, 1),
        )
        .unwrap();
        s.receive(scalar_update(&mask, 0, 0.3, 10, 1)).unwrap();
        s.step = 3;
        assert!(matches!(
            s.aggregate_ftte(),
            Err(Error::ClockRegression { .. })
        ));
    }

    #[test]
    fn sample_weighting_flag() {
        let (spec, mask) = scalar_setup();
        let mut cfg = ServerConfig::new(Strategy::Ftte, 2);
        cfg.weight_by_samples = true;
        let mut s = ServerState::new(ParamSet::zeros(&spec), mask.clone(), cfg).unwrap();
        s.receive(scalar_update(&mask, 0, 0.0, 0, 1)).unwrap();
        s.receive(scalar_update(&mask, 1, 0.4, 0, 3)).unwrap();
        let agg = s.aggregate_ftte().unwrap();
        assert_eq!(agg.lambdas, vec![0.25, 0.75]);
        assert!((s.global.layers[0].bias.data()[0] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn sync_weighted_mean() {
        let (spec, mask) = scalar_setup();
        let mut s = ServerState::new(
            ParamSet::zeros(&spec),
            mask.clone(),
            ServerConfig::new(Strategy::Sync, 1),
        )
        .unwrap();
        let ups = vec![
            scalar_update(&mask, 0, 0.0, 0, 1),
            scalar_update(&mask, 1, 0.3, 0, 1),
            scalar_update(&mask, 2, 0.3, 0, 2),
        ];
        s.aggregate_sync(&ups, 3).unwrap();
        assert!((s.global.layers[0].bias.data()[0] - 0.225).abs() < 1e-7);
        assert!(matches!(
            s.aggregate_sync(&ups[..2], 3),
            Err(Error::MissingClient(2))
        ));
    }

    #[test]
    fn sync_single_client_takes_its_model() {
        let (spec, mask) = scalar_setup();
        let mut s = ServerState::new(
            ParamSet::zeros(&spec),
            mask.clone(),
            ServerConfig::new(Strategy::Sync, 1),
        )
        .unwrap();
        s.aggregate_sync(&[scalar_update(&mask, 0, 0.7, 0, 5)], 1)
            .unwrap();
        assert_eq!(s.global.layers[0].bias.data()[0], 0.7);
    }

    #[test]
    fn async_mixing() {
        let (spec, mask) = scalar_setup();
        let mut cfg = ServerConfig::new(Strategy::Async, 1);
        cfg.async_mixing = 1.0;
        let mut s = ServerState::new(ParamSet::zeros(&spec), mask.clone(), cfg).unwrap();
        s.apply_async(&scalar_update(&mask, 0, 0.5, 0, 1)).unwrap();
        assert_eq!(s.global.layers[0].bias.data()[0], 0.5);

        s.version = 3;
        let agg = s.apply_async(&scalar_update(&mask, 0, 1.0, 0, 1)).unwrap();
        assert_eq!(agg.staleness[0].weight, 0.5);
        assert_eq!(s.global.layers[0].bias.data()[0], 1.0);

        s.config.async_mixing = 0.0;
        let before = s.global.clone();
        s.apply_async(&scalar_update(&mask, 0, 1.0, 0, 1)).unwrap();
        assert_eq!(s.global, before);
        assert_eq!(s.version, 5);
    }
}
