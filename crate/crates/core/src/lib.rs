//! Simulator and library for semi-asynchronous federated learning with
//! sparse parameter selection and age-and-variance staleness weighting.

pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
