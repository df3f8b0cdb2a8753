//! Parallel discrete-event simulation on shared-memory multicores.

pub mod engine;
pub mod error;
pub mod fingerprint;
pub mod model;
pub mod models;
pub mod pool;
pub mod rng;
pub mod time;
pub mod topology;
