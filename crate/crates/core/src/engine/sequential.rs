//! Single-threaded reference engine: the ground truth for both parallel engines.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{execute, fingerprint_states, EngineConfig, ObjectRecord, RunMetrics, RunOutcome, Stop, WallClock};
use crate::error::EngineError;
use crate::fingerprint::{Fingerprint, TraceDigest};
use crate::model::{init_object, Emitter, Model};
use crate::time::{Event, EventKey, ObjectId};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Queued(Event);

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.key.cmp(&other.0.key)
    }
}

/// Resumable sequential simulation. Each [`run`](Self::run) continues where
/// the previous one stopped.
pub struct SequentialEngine<'m, M: Model> {
    model: &'m M,
    objects: Vec<ObjectRecord<M::State>>,
    pool: BinaryHeap<Reverse<Queued>>,
    emitter: Emitter,
    generated: Vec<Event>,
    clock: f64,
    processed: u64,
    trace: Option<Vec<EventKey>>,
}

impl<'m, M: Model> SequentialEngine<'m, M> {
    pub fn new(model: &'m M, seed: u64) -> Result<Self, EngineError> {
        let mut objects = Vec::with_capacity(model.n_objects());
        let mut pool = BinaryHeap::new();
        for i in 0..model.n_objects() {
            let init = init_object(model, seed, ObjectId::from(i))?;
            pool.extend(init.events.into_iter().map(|e| Reverse(Queued(e))));
            objects.push(ObjectRecord { state: init.state, ctx: init.ctx, trace: TraceDigest::default() });
        }
        Ok(SequentialEngine {
            model,
            objects,
            pool,
            emitter: Emitter::new(),
            generated: Vec::new(),
            clock: 0.0,
            processed: 0,
            trace: None,
        })
    }

    pub fn record_trace(&mut self, on: bool) {
        self.trace = if on { Some(self.trace.take().unwrap_or_default()) } else { None };
    }

    /// Timestamp of the last processed event.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn state(&self, obj: ObjectId) -> &M::State {
        &self.objects[obj.index()].state
    }

    pub fn states(&self) -> impl Iterator<Item = &M::State> {
        self.objects.iter().map(|o| &o.state)
    }

    pub fn pending(&self) -> impl Iterator<Item = &Event> {
        self.pool.iter().map(|Reverse(Queued(e))| e)
    }

    pub fn next_ts(&self) -> Option<f64> {
        self.pool.peek().map(|Reverse(Queued(e))| e.ts().as_f64())
    }

    pub fn trace(&self) -> Option<&[EventKey]> {
        self.trace.as_deref()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        fingerprint_states(self.model, self.objects.iter().map(|o| (&o.state, &o.trace)))
    }

    /// Processes the minimum-key event, if any.
    pub fn step(&mut self) -> Result<Option<Event>, EngineError> {
        let Some(Reverse(Queued(ev))) = self.pool.pop() else { return Ok(None) };
        let obj = &mut self.objects[ev.dst().index()];
        self.generated.clear();
        execute(self.model, &mut obj.state, &mut obj.ctx, &ev, &mut self.emitter, None, &mut self.generated)?;
        obj.trace.push(&ev.key);
        self.pool.extend(self.generated.drain(..).map(|e| Reverse(Queued(e))));
        self.clock = ev.ts().as_f64();
        self.processed += 1;
        if let Some(t) = &mut self.trace {
            t.push(ev.key);
        }
        Ok(Some(ev))
    }

    pub fn run(&mut self, stop: Stop, warmup_fraction: f64) -> Result<RunOutcome, EngineError> {
        stop.validate()?;
        let mut clock = WallClock::new(&stop, warmup_fraction);
        let until = stop.until();
        let mut done = 0u64;
        loop {
            match stop {
                Stop::Events(n) if done >= n => break,
                Stop::WallClock(_) if done.is_multiple_of(1024) && clock.poll(done, done) => break,
                _ => {}
            }
            if self.next_ts().is_none_or(|ts| ts >= until) {
                break;
            }
            self.step()?;
            done += 1;
        }
        let (wall, measured) = clock.finish(done, done);
        Ok(RunOutcome {
            metrics: RunMetrics {
                committed_events: done,
                processed_events: done,
                rollbacks: 0,
                wall_seconds: wall,
                measured,
                end_time: self.clock,
            },
            fingerprint: self.fingerprint(),
            trace: self.trace.as_ref().map(|t| {
                let mut t = t.clone();
                // Stable: each object keeps its processing order.
                t.sort_by_key(|k| k.dst);
                t
            }),
        })
    }
}

pub fn run_sequential<M: Model>(model: &M, seed: u64, stop: Stop, cfg: &EngineConfig) -> Result<RunOutcome, EngineError> {
    let mut engine = SequentialEngine::new(model, seed)?;
    engine.record_trace(cfg.record_trace);
    engine.run(stop, cfg.warmup_fraction)
}
