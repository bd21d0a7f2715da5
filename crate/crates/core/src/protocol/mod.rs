//! Client training and the server aggregation state machines.

mod client;
mod server;
mod staleness;

pub use client::{client_local_train, ClientShard};
pub use server::{AgeMode, Aggregation, ClientUpdate, ServerConfig, ServerState, Strategy};
pub use staleness::{
    compute_age, compute_variance, polynomial_staleness, staleness_weight, StalenessWeight,
};
