//! Simulation engines and the types they share.

pub mod conservative;
pub mod optimistic;
pub mod sequential;

mod sync;

use std::time::{Duration, Instant};

use crate::error::EngineError;
use crate::fingerprint::{object_digest, Fingerprint, TraceDigest};
use crate::model::{Emitter, Model, ObjectContext};
use crate::pool::bucket_index;
use crate::time::{Event, EventKey, VirtualTime};
use crate::topology::Placement;

pub use conservative::{run_conservative, run_conservative_with, ConservativeOptions, ConservativeRun, DispatchLog};
pub use optimistic::{
    run_optimistic, run_optimistic_with, CausalRecord, Execution, OptimisticOptions, OptimisticReport, OptimisticRun, Selection,
};
pub use sequential::{run_sequential, SequentialEngine};

/// When a run ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stop {
    /// After this many committed events. Parallel engines may overshoot to
    /// the next safe point (window end or GVT).
    Events(u64),
    /// Once every event with `ts < T` is committed and none at or above is.
    Until(f64),
    WallClock(Duration),
}

impl Stop {
    pub(crate) fn validate(&self) -> Result<(), EngineError> {
        match *self {
            Stop::Events(0) => Err(EngineError::InvalidStop),
            Stop::Until(t) if !(t > 0.0) => Err(EngineError::InvalidStop),
            Stop::WallClock(d) if d.is_zero() => Err(EngineError::InvalidStop),
            _ => Ok(()),
        }
    }

    pub(crate) fn until(&self) -> f64 {
        match *self {
            Stop::Until(t) => t,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub threads: usize,
    /// Worker CPUs and object homes. `None` runs every worker on node 0 unpinned.
    pub placement: Option<Placement>,
    /// Bind each worker to its placement CPU.
    pub pin: bool,
    /// Leading share of a wall-clock run excluded from throughput.
    pub warmup_fraction: f64,
    /// Keep the full committed key sequence (for divergence reports).
    pub record_trace: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { threads: 1, placement: None, pin: false, warmup_fraction: 0.05, record_trace: false }
    }
}

impl EngineConfig {
    pub fn with_threads(threads: usize) -> Self {
        EngineConfig { threads: threads.max(1), ..Default::default() }
    }

    pub(crate) fn placement_for(&self, n_objects: usize) -> Placement {
        match &self.placement {
            Some(p) if p.thread_node.len() >= self.threads && p.object_home.len() == n_objects => p.clone(),
            _ => Placement::unpinned(self.threads, n_objects),
        }
    }
}

/// Counts over the measured part of a run (after warm-up).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Interval {
    pub committed: u64,
    pub processed: u64,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub committed_events: u64,
    pub processed_events: u64,
    pub rollbacks: u64,
    pub wall_seconds: f64,
    pub measured: Interval,
    /// Timestamp of the last committed event.
    pub end_time: f64,
}

impl RunMetrics {
    fn rate(count_measured: u64, count_total: u64, m: &Interval, wall: f64) -> f64 {
        if m.seconds > 0.0 {
            count_measured as f64 / m.seconds
        } else if wall > 0.0 {
            count_total as f64 / wall
        } else {
            0.0
        }
    }

    pub fn committed_throughput(&self) -> f64 {
        Self::rate(self.measured.committed, self.committed_events, &self.measured, self.wall_seconds)
    }

    pub fn total_throughput(&self) -> f64 {
        Self::rate(self.measured.processed, self.processed_events, &self.measured, self.wall_seconds)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub fingerprint: Fingerprint,
    /// Committed keys grouped by object, each object's in the order it
    /// committed them, when tracing was requested.
    pub trace: Option<Vec<EventKey>>,
}

/// The first stop time at or after the window containing `last_ts` that
/// falls on a multiple of `lookahead`. Runs that stop there commit the same
/// events on every engine.
pub fn aligned_until(last_ts: f64, lookahead: f64) -> f64 {
    if lookahead > 0.0 {
        let ts = VirtualTime::new(last_ts.max(0.0)).unwrap_or(VirtualTime::ZERO);
        (bucket_index(ts, lookahead) + 1) as f64 * lookahead
    } else {
        let next = last_ts.max(0.0).next_up();
        if next > 0.0 { next } else { f64::MIN_POSITIVE }
    }
}

/// Position and keys of the first difference between two committed traces.
pub fn first_divergence(a: &[EventKey], b: &[EventKey]) -> Option<(usize, Option<EventKey>, Option<EventKey>)> {
    let n = a.len().max(b.len());
    (0..n).find(|&i| a.get(i) != b.get(i)).map(|i| (i, a.get(i).copied(), b.get(i).copied()))
}

/// Object state plus the engine-side context and committed trace digest.
#[derive(Clone, Debug)]
pub(crate) struct ObjectRecord<S> {
    pub state: S,
    pub ctx: ObjectContext,
    pub trace: TraceDigest,
}

pub(crate) fn fingerprint_states<'a, M: Model + 'a>(
    model: &M,
    objects: impl Iterator<Item = (&'a M::State, &'a TraceDigest)>,
) -> Fingerprint {
    let mut buf = Vec::new();
    objects
        .map(|(s, t)| {
            buf.clear();
            model.state_bytes(s, &mut buf);
            object_digest(&buf, t)
        })
        .sum()
}

/// Runs one event through the model and stamps what it schedules.
///
/// Every scheduled key must follow the handled key; with `lookahead`, every
/// scheduled timestamp must also be at least `now + lookahead`.
pub(crate) fn execute<M: Model>(
    model: &M,
    state: &mut M::State,
    ctx: &mut ObjectContext,
    ev: &Event,
    emitter: &mut Emitter,
    lookahead: Option<f64>,
    generated: &mut Vec<Event>,
) -> Result<(), EngineError> {
    emitter.reset(ev.ts());
    model.on_event(state, ev, &mut ctx.rng, emitter)?;
    let n = model.n_objects();
    for e in emitter.drain() {
        if e.dst.index() >= n {
            return Err(EngineError::UnknownObject(e.dst));
        }
        let out = ctx.stamp(ev.dst(), e)?;
        if out.key <= ev.key {
            return Err(EngineError::Causality { cause: ev.key, scheduled: out.key });
        }
        if let Some(l) = lookahead {
            if out.ts().as_f64() < ev.ts().as_f64() + l {
                return Err(EngineError::Lookahead { cause: ev.key, scheduled: out.key, lookahead: l });
            }
        }
        generated.push(out);
    }
    Ok(())
}

/// Tracks the warm-up cut of a wall-clock run.
pub(crate) struct WallClock {
    start: Instant,
    budget: Option<Duration>,
    warmup: Option<Duration>,
    snapshot: Option<(Instant, u64, u64)>,
}

impl WallClock {
    pub fn new(stop: &Stop, warmup_fraction: f64) -> Self {
        let budget = match stop {
            Stop::WallClock(d) => Some(*d),
            _ => None,
        };
        let frac = warmup_fraction.clamp(0.0, 0.9);
        WallClock {
            start: Instant::now(),
            budget,
            warmup: budget.filter(|_| frac > 0.0).map(|d| d.mul_f64(frac)),
            snapshot: None,
        }
    }

    /// Records the warm-up snapshot once it is due; returns true when the
    /// wall-clock budget is exhausted.
    pub fn poll(&mut self, committed: u64, processed: u64) -> bool {
        let Some(budget) = self.budget else { return false };
        let elapsed = self.start.elapsed();
        if self.snapshot.is_none() && self.warmup.is_some_and(|w| elapsed >= w) {
            self.snapshot = Some((Instant::now(), committed, processed));
        }
        elapsed >= budget
    }

    /// True once the measured interval has begun.
    pub fn measuring(&self) -> bool {
        self.warmup.is_none() || self.snapshot.is_some()
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn finish(&self, committed: u64, processed: u64) -> (f64, Interval) {
        let wall = self.elapsed();
        let measured = match self.snapshot {
            Some((at, c, p)) => Interval {
                committed: committed.saturating_sub(c),
                processed: processed.saturating_sub(p),
                seconds: at.elapsed().as_secs_f64(),
            },
            None => Interval { committed, processed, seconds: wall },
        };
        (wall, measured)
    }
}
