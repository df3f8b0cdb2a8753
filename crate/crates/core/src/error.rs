use thiserror::Error;

use crate::time::{EventKey, ObjectId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("invalid virtual time {0}: must be finite and non-negative")]
    InvalidTime(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoolError {
    #[error("insert at {ts} below the fossil horizon {horizon}")]
    StaleInsert { ts: f64, horizon: f64 },
    #[error("event handle {key:?} refers to a fossil-collected event")]
    StaleHandle { key: EventKey },
    #[error("event for {event_dst} inserted into the calendar of {owner}")]
    DestinationMismatch { owner: ObjectId, event_dst: ObjectId },
    #[error("timestamp {ts} lies beyond the addressable calendar horizon")]
    HorizonExceeded { ts: f64 },
    #[error("bucket width must be positive and finite, got {0}")]
    InvalidWidth(f64),
}

/// Errors raised by model code. Models only fail on internal inconsistency.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{0}")]
    Inconsistent(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("causality violation: event {cause:?} scheduled {scheduled:?} in its past")]
    Causality { cause: EventKey, scheduled: EventKey },
    #[error("lookahead violation: event {cause:?} scheduled {scheduled:?} closer than lookahead {lookahead}")]
    Lookahead { cause: EventKey, scheduled: EventKey, lookahead: f64 },
    #[error("conservative synchronization needs a positive lookahead, model declares {0}")]
    UnsupportedLookahead(f64),
    #[error("stop budget must be positive")]
    InvalidStop,
    #[error("object {obj} accessed concurrently; exclusive ownership was violated")]
    OwnershipViolation { obj: ObjectId },
    #[error("no checkpoint of {obj} precedes rollback point {ts}")]
    MissingCheckpoint { obj: ObjectId, ts: f64 },
    #[error("invalid virtual time {0} emitted by model")]
    InvalidTime(f64),
    #[error("event for unknown object {0}")]
    UnknownObject(ObjectId),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("{requested} workers requested but the topology has {available} logical CPUs")]
    Capacity { requested: usize, available: usize },
    #[error("logical CPU {0} appears more than once in the topology")]
    DuplicateCpu(usize),
    #[error("topology has no logical CPUs")]
    Empty,
    #[error("topology file: {0}")]
    Parse(String),
}
