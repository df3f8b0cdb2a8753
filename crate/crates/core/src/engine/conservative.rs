//! Windowed conservative engine with constant global lookahead.
//!
//! Window `k` covers `[kL, (k+1)L)`. Workers take object IDs from per-node
//! counters, process all of that object's window events in key order, and
//! meet at a barrier once every counter is exhausted. Since every scheduled
//! event lands at least `L` later, it belongs to a strictly later window, so
//! objects never need to coordinate inside a window.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use crossbeam::utils::CachePadded;
use parking_lot::Mutex;

use super::sync::{Barrier, PickCounters};
use super::{execute, fingerprint_states, EngineConfig, ObjectRecord, RunMetrics, RunOutcome, Stop, WallClock};
use crate::error::EngineError;
use crate::fingerprint::TraceDigest;
use crate::model::{init_object, Emitter, Model};
use crate::pool::{bucket_index, ObjectCalendar};
use crate::time::{Event, EventKey, ObjectId, VirtualTime};
use crate::topology::pin_current_thread;

#[derive(Clone, Debug, Default)]
pub struct ConservativeOptions {
    /// Record every dispatch, scheduled event and dispensed ID.
    pub log_dispatch: bool,
    /// Test hook: dispatch each object's window events in reverse key order.
    pub corrupt_order: bool,
}

/// Per-run logs for window, lookahead and dispensing checks.
#[derive(Clone, Debug, Default)]
pub struct DispatchLog {
    /// `(window, key)` for every dispatched event.
    pub dispatched: Vec<(u64, EventKey)>,
    /// `(cause, scheduled)` for every scheduled event.
    pub scheduled: Vec<(EventKey, EventKey)>,
    /// `(window, object)` for every dispensed ID.
    pub dispensed: Vec<(u64, ObjectId)>,
    pub windows: u64,
    pub lookahead: f64,
}

#[derive(Clone, Debug)]
pub struct ConservativeRun {
    pub outcome: RunOutcome,
    pub log: Option<DispatchLog>,
}

#[derive(Default)]
struct WorkerCounters {
    processed: AtomicU64,
    inserted: AtomicU64,
    drained: AtomicU64,
}

struct Shared<'m, M: Model> {
    model: &'m M,
    lookahead: f64,
    until: f64,
    opts: ConservativeOptions,
    calendars: Vec<ObjectCalendar>,
    objects: Vec<Mutex<ObjectRecord<M::State>>>,
    counters: PickCounters,
    barrier: Barrier,
    window: CachePadded<AtomicU64>,
    stop: AtomicBool,
    error: Mutex<Option<EngineError>>,
    workers: Vec<CachePadded<WorkerCounters>>,
}

#[derive(Default)]
struct WorkerOut {
    trace: Vec<EventKey>,
    log: DispatchLog,
    last_ts: f64,
}

struct Leader {
    clock: WallClock,
    stop: Stop,
    initial: u64,
    windows: u64,
    last_processed: u64,
}

impl<M: Model> Shared<'_, M> {
    fn window_bounds(&self, k: u64) -> (VirtualTime, VirtualTime) {
        let start = k as f64 * self.lookahead;
        let end = ((k + 1) as f64 * self.lookahead).min(self.until);
        (VirtualTime::from_f64_unchecked(start), VirtualTime::from_f64_unchecked(end))
    }

    /// Records the first error. Only the barrier leader raises `stop`, so a
    /// peer cannot leave the loop while this worker still heads for the barrier.
    fn fail(&self, e: EngineError) {
        let mut slot = self.error.lock();
        if slot.is_none() {
            *slot = Some(e);
        }
    }

    fn process_object_window(
        &self,
        me: usize,
        obj: ObjectId,
        k: u64,
        emitter: &mut Emitter,
        generated: &mut Vec<Event>,
        out: &mut WorkerOut,
        record_trace: bool,
    ) -> Result<u64, EngineError> {
        let (ws, we) = self.window_bounds(k);
        let mut events = self.calendars[obj.index()].drain_window(ws, we);
        if events.is_empty() {
            return Ok(0);
        }
        let counters = &self.workers[me];
        counters.drained.fetch_add(events.len() as u64, Ordering::Relaxed);
        if self.opts.corrupt_order {
            events.reverse();
        }
        let mut guard = self.objects[obj.index()].try_lock().ok_or(EngineError::OwnershipViolation { obj })?;
        let rec = &mut *guard;
        for ev in &events {
            if self.opts.log_dispatch {
                out.log.dispatched.push((k, ev.key));
            }
            generated.clear();
            execute(self.model, &mut rec.state, &mut rec.ctx, ev, emitter, Some(self.lookahead), generated)?;
            for g in generated.drain(..) {
                if bucket_index(g.ts(), self.lookahead) <= k {
                    return Err(EngineError::Lookahead { cause: ev.key, scheduled: g.key, lookahead: self.lookahead });
                }
                if self.opts.log_dispatch {
                    out.log.scheduled.push((ev.key, g.key));
                }
                self.calendars[g.dst().index()].insert(g)?;
                counters.inserted.fetch_add(1, Ordering::Relaxed);
            }
            rec.trace.push(&ev.key);
            if record_trace {
                out.trace.push(ev.key);
            }
            out.last_ts = out.last_ts.max(ev.ts().as_f64());
        }
        counters.processed.fetch_add(events.len() as u64, Ordering::Relaxed);
        Ok(events.len() as u64)
    }

    fn totals(&self) -> (u64, u64, u64) {
        self.workers.iter().fold((0, 0, 0), |(p, i, d), w| {
            (
                p + w.processed.load(Ordering::Relaxed),
                i + w.inserted.load(Ordering::Relaxed),
                d + w.drained.load(Ordering::Relaxed),
            )
        })
    }

    /// Runs on the last thread to reach the barrier, while all others wait.
    fn end_window(&self, leader: &mut Leader) {
        leader.windows += 1;
        let (processed, inserted, drained) = self.totals();
        let pending = leader.initial + inserted - drained;
        let k = self.window.load(Ordering::Relaxed);
        let mut next = k + 1;
        let done = match leader.stop {
            Stop::Events(n) => processed >= n,
            Stop::WallClock(_) => leader.clock.poll(processed, processed),
            Stop::Until(t) => next as f64 * self.lookahead >= t,
        };
        if done || pending == 0 || self.error.lock().is_some() {
            self.stop.store(true, Ordering::Release);
            return;
        }
        if processed == leader.last_processed {
            // Nothing happened in this window: skip straight to the next event.
            if let Some(min) = self.calendars.iter().filter_map(ObjectCalendar::min_ts).min() {
                next = next.max(bucket_index(min, self.lookahead));
                if next as f64 * self.lookahead >= self.until {
                    self.stop.store(true, Ordering::Release);
                    return;
                }
            }
        }
        leader.last_processed = processed;
        self.counters.reset();
        self.window.store(next, Ordering::Release);
    }
}

pub fn run_conservative<M: Model>(
    model: &M,
    seed: u64,
    stop: Stop,
    cfg: &EngineConfig,
) -> Result<RunOutcome, EngineError> {
    run_conservative_with(model, seed, stop, cfg, &ConservativeOptions::default()).map(|r| r.outcome)
}

pub fn run_conservative_with<M: Model>(
    model: &M,
    seed: u64,
    stop: Stop,
    cfg: &EngineConfig,
    opts: &ConservativeOptions,
) -> Result<ConservativeRun, EngineError> {
    stop.validate()?;
    let lookahead = model.lookahead();
    if !(lookahead > 0.0) || !lookahead.is_finite() {
        return Err(EngineError::UnsupportedLookahead(lookahead));
    }
    let n = model.n_objects();
    let threads = cfg.threads.max(1);
    let placement = cfg.placement_for(n);

    let mut calendars = Vec::with_capacity(n);
    let mut objects = Vec::with_capacity(n);
    let mut initial_events = Vec::new();
    for i in 0..n {
        let obj = ObjectId::from(i);
        let init = init_object(model, seed, obj)?;
        calendars.push(ObjectCalendar::new(obj, lookahead)?);
        objects.push(Mutex::new(ObjectRecord { state: init.state, ctx: init.ctx, trace: TraceDigest::default() }));
        initial_events.extend(init.events);
    }
    let initial = initial_events.len() as u64;
    let first_window = initial_events.iter().map(|e| e.ts()).min().map(|t| bucket_index(t, lookahead)).unwrap_or(0);
    for e in initial_events {
        calendars[e.dst().index()].insert(e)?;
    }

    let shared = Shared {
        model,
        lookahead,
        until: stop.until(),
        opts: opts.clone(),
        calendars,
        objects,
        counters: PickCounters::new(&placement.object_home, placement.n_nodes),
        barrier: Barrier::new(threads),
        window: CachePadded::new(AtomicU64::new(first_window)),
        stop: AtomicBool::new(initial == 0 || first_window as f64 * lookahead >= stop.until()),
        error: Mutex::new(None),
        workers: (0..threads).map(|_| CachePadded::new(WorkerCounters::default())).collect(),
    };
    let leader = Mutex::new(Leader {
        clock: WallClock::new(&stop, cfg.warmup_fraction),
        stop,
        initial,
        windows: 0,
        last_processed: 0,
    });

    let outs: Vec<WorkerOut> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|me| {
                let shared = &shared;
                let leader = &leader;
                let placement = &placement;
                s.spawn(move || {
                    if cfg.pin {
                        if let Some(cpu) = placement.cpu_of(me) {
                            pin_current_thread(cpu);
                        }
                    }
                    let my_node = placement.thread_node.get(me).copied().unwrap_or(0);
                    let mut out = WorkerOut::default();
                    let mut emitter = Emitter::new();
                    let mut generated = Vec::new();
                    let mut sense = false;
                    while !shared.stop.load(Ordering::Acquire) {
                        let k = shared.window.load(Ordering::Acquire);
                        while let Some(obj) = shared.counters.pick(my_node) {
                            if shared.opts.log_dispatch {
                                out.log.dispensed.push((k, obj));
                            }
                            if let Err(e) = shared.process_object_window(
                                me,
                                obj,
                                k,
                                &mut emitter,
                                &mut generated,
                                &mut out,
                                cfg.record_trace,
                            ) {
                                shared.fail(e);
                                break;
                            }
                        }
                        shared.barrier.wait(&mut sense, || shared.end_window(&mut leader.lock()));
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("conservative worker panicked")).collect()
    });

    if let Some(e) = shared.error.lock().take() {
        return Err(e);
    }
    let (processed, _, _) = shared.totals();
    let leader = leader.into_inner();
    let (wall, measured) = leader.clock.finish(processed, processed);
    let objects: Vec<ObjectRecord<M::State>> = shared.objects.into_iter().map(Mutex::into_inner).collect();
    let fingerprint = fingerprint_states(model, objects.iter().map(|o| (&o.state, &o.trace)));

    let end_time = outs.iter().map(|o| o.last_ts).fold(0.0, f64::max);
    let trace = cfg.record_trace.then(|| {
        let mut t: Vec<EventKey> = outs.iter().flat_map(|o| o.trace.iter().copied()).collect();
        // One worker dispatches an object's whole window, so a stable sort
        // by (object, window) keeps each object's dispatch order.
        t.sort_by_key(|k| (k.dst, bucket_index(k.ts, lookahead)));
        t
    });
    let log = opts.log_dispatch.then(|| {
        let mut log = DispatchLog { windows: leader.windows, lookahead, ..Default::default() };
        for o in outs {
            log.dispatched.extend(o.log.dispatched);
            log.scheduled.extend(o.log.scheduled);
            log.dispensed.extend(o.log.dispensed);
        }
        log
    });
    Ok(ConservativeRun {
        outcome: RunOutcome {
            metrics: RunMetrics {
                committed_events: processed,
                processed_events: processed,
                rollbacks: 0,
                wall_seconds: wall,
                measured,
                end_time,
            },
            fingerprint,
            trace,
        },
        log,
    })
}
