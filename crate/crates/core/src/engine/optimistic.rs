//! Optimistic engine over the fully shared calendar queue.
//!
//! Workers pick low-timestamp events from the shared queue, bind the
//! destination object through its lock word and process a batch of that
//! object's events inside `[ts, ts + delta)`. Out-of-order arrivals roll the
//! object back to a checkpoint and coast forward; events sent along the undone
//! trajectory are tombstoned, and destinations that already processed one get
//! a rollback request that the next thread touching them services.
//!
//! GVT is computed in rounds. Each thread acknowledges a round at an idle
//! point, then records the timestamp of everything it claims; the last thread
//! to acknowledge takes the minimum of the queue, pending requests and those
//! records. Committed events are folded into each object's trace lazily, the
//! next time the object is bound.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use crossbeam::queue::SegQueue;
use crossbeam::utils::CachePadded;
use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use super::sync::backoff;
use super::{execute, fingerprint_states, EngineConfig, RunMetrics, RunOutcome, Stop, WallClock};
use crate::error::EngineError;
use crate::fingerprint::TraceDigest;
use crate::model::{init_object, Emitter, Model, ObjectContext};
use crate::pool::{EventHandle, Invalidation, SharedCalendarQueue};
use crate::time::{Event, EventKey, ObjectId, VirtualTime};
use crate::topology::pin_current_thread;

const INF_BITS: u64 = 0x7FF0_0000_0000_0000;
const GVT_HISTORY_CAP: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Recently bound objects first, then NUMA-local, then any.
    Tiered,
    /// Test hook: random candidate order, to provoke rollbacks.
    Chaos { seed: u64 },
    /// Test hook: latest candidate first, for scripted rollback scenarios.
    Reverse,
}

#[derive(Clone, Debug)]
pub struct OptimisticOptions {
    /// Bind window span; defaults to the queue bucket width.
    pub delta: Option<f64>,
    /// Shared-queue bucket width; defaults to the mean spacing of initial events.
    pub bucket_width: Option<f64>,
    pub checkpoint_interval: u32,
    /// Binds per thread between GVT rounds.
    pub gvt_period: u64,
    pub candidates: usize,
    pub selection: Selection,
    pub record_causality: bool,
}

impl Default for OptimisticOptions {
    fn default() -> Self {
        OptimisticOptions {
            delta: None,
            bucket_width: None,
            checkpoint_interval: 16,
            gvt_period: 4096,
            candidates: 32,
            selection: Selection::Tiered,
            record_causality: false,
        }
    }
}

/// One processing of one event instance.
#[derive(Clone, Debug)]
pub struct Execution {
    pub id: u64,
    pub instance: u64,
    pub key: EventKey,
    /// Instances of the events it scheduled.
    pub children: Vec<u64>,
}

/// Who generated what, per execution, for annihilation checks.
#[derive(Clone, Debug, Default)]
pub struct CausalRecord {
    pub executions: Vec<Execution>,
    /// Executions undone by rollback.
    pub undone: Vec<u64>,
    /// Event instances whose processing was committed.
    pub committed: Vec<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct OptimisticReport {
    /// Events whose processing was undone.
    pub undone: u64,
    pub gvt_history: Vec<f64>,
    pub reclaimed: u64,
    pub bucket_width: f64,
    pub delta: f64,
    pub causality: Option<CausalRecord>,
}

#[derive(Clone, Debug)]
pub struct OptimisticRun {
    pub outcome: RunOutcome,
    pub report: OptimisticReport,
}

struct Checkpoint<S> {
    index: u64,
    state: S,
    ctx: ObjectContext,
}

struct LogEntry {
    handle: EventHandle,
    generated: Vec<EventHandle>,
    exec: u64,
    /// Processed after warm-up.
    measured: bool,
}

struct ObjectInner<S> {
    state: S,
    ctx: ObjectContext,
    /// Processed events from absolute index `base` on.
    log: VecDeque<LogEntry>,
    base: u64,
    /// Entries below this absolute index are committed.
    committed: u64,
    checkpoints: VecDeque<Checkpoint<S>>,
    since_checkpoint: u32,
    trace: TraceDigest,
    last_key: Option<EventKey>,
    /// Key of the newest entry dropped from the front of the log.
    floor_key: Option<EventKey>,
}

impl<S: Clone> ObjectInner<S> {
    fn len(&self) -> u64 {
        self.base + self.log.len() as u64
    }

    fn checkpoint(&mut self) {
        let index = self.len();
        self.checkpoints.push_back(Checkpoint { index, state: self.state.clone(), ctx: self.ctx.clone() });
        self.since_checkpoint = 0;
    }
}

struct Slot<S> {
    inner: Mutex<ObjectInner<S>>,
    request: CachePadded<AtomicU64>,
}

#[derive(Default)]
struct ThreadSlot {
    local_min: AtomicU64,
    acked: AtomicU64,
    processed: AtomicU64,
    undone: AtomicU64,
    committed: AtomicU64,
    rollbacks: AtomicU64,
    processed_measured: AtomicU64,
    committed_measured: AtomicU64,
}

struct Worker {
    me: usize,
    node: usize,
    emitter: Emitter,
    generated: Vec<Event>,
    scratch: Vec<Event>,
    recent: VecDeque<ObjectId>,
    rng: Option<Xoshiro256PlusPlus>,
    trace: Vec<EventKey>,
    last_committed_ts: f64,
    binds: u64,
}

impl Worker {
    fn new(me: usize, node: usize, selection: Selection) -> Self {
        Worker {
            me,
            node,
            emitter: Emitter::new(),
            generated: Vec::new(),
            scratch: Vec::new(),
            recent: VecDeque::new(),
            rng: match selection {
                Selection::Chaos { seed } => Some(Xoshiro256PlusPlus::seed_from_u64(seed ^ (me as u64) << 32)),
                Selection::Tiered | Selection::Reverse => None,
            },
            trace: Vec::new(),
            last_committed_ts: 0.0,
            binds: 0,
        }
    }
}

struct Shared<'m, M: Model> {
    model: &'m M,
    queue: SharedCalendarQueue,
    objects: Vec<Slot<M::State>>,
    home: Vec<usize>,
    requests: SegQueue<ObjectId>,
    threads: Vec<CachePadded<ThreadSlot>>,
    delta: f64,
    until: f64,
    strict: bool,
    opts: OptimisticOptions,
    record_trace: bool,
    gvt: CachePadded<AtomicU64>,
    round: CachePadded<AtomicU64>,
    round_active: AtomicBool,
    acks: AtomicUsize,
    stop: AtomicBool,
    error: Mutex<Option<EngineError>>,
    gvt_history: Mutex<Vec<f64>>,
    reclaimed: AtomicU64,
    exec_ids: AtomicU64,
    causality: Option<Mutex<CausalRecord>>,
    /// Set at the end of warm-up. Only events processed afterwards count
    /// towards the measured interval, committed or not, so the measured
    /// committed count can never exceed the measured processed count.
    measuring: AtomicBool,
}

impl<M: Model> Shared<'_, M> {
    fn gvt(&self) -> f64 {
        f64::from_bits(self.gvt.load(Ordering::SeqCst))
    }

    fn fail(&self, e: EngineError) {
        let mut slot = self.error.lock();
        if slot.is_none() {
            *slot = Some(e);
        }
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Publishes that this thread is about to take responsibility for `ts`.
    fn note(&self, me: usize, ts: f64) {
        let slot = &self.threads[me].local_min;
        let bits = ts.to_bits();
        if bits < slot.load(Ordering::Relaxed) {
            slot.store(bits, Ordering::SeqCst);
        }
    }

    fn request_rollback(&self, obj: ObjectId, ts: f64) {
        let prev = self.objects[obj.index()].request.fetch_min(ts.to_bits(), Ordering::SeqCst);
        if prev == INF_BITS {
            self.requests.push(obj);
        }
    }

    fn take_request(&self, me: usize, obj: ObjectId) -> Option<f64> {
        let r = &self.objects[obj.index()].request;
        loop {
            let v = r.load(Ordering::SeqCst);
            if v == INF_BITS {
                return None;
            }
            self.note(me, f64::from_bits(v));
            if r.compare_exchange(v, INF_BITS, Ordering::SeqCst, Ordering::SeqCst).is_ok() {
                return Some(f64::from_bits(v));
            }
        }
    }

    fn service_request(&self, w: &mut Worker, obj: ObjectId, inner: &mut ObjectInner<M::State>) -> Result<(), EngineError> {
        if let Some(ts) = self.take_request(w.me, obj) {
            let bound = EventKey::lower_bound(VirtualTime::from_f64_unchecked(ts));
            if self.rollback(w, obj, inner, bound)? > 0 {
                self.threads[w.me].rollbacks.fetch_add(1, Ordering::Relaxed);
            }
        }
        Ok(())
    }

    /// Undoes every processed event with key `>= bound`, then restores the
    /// newest checkpoint at or below the cut and coasts forward to it.
    fn rollback(
        &self,
        w: &mut Worker,
        obj: ObjectId,
        inner: &mut ObjectInner<M::State>,
        bound: EventKey,
    ) -> Result<u64, EngineError> {
        let mut undone = 0u64;
        while inner.log.back().is_some_and(|e| *e.handle.key() >= bound) {
            debug_assert!(inner.len() > inner.committed, "rollback below the committed point");
            if inner.len() <= inner.committed {
                break;
            }
            let entry = inner.log.pop_back().expect("checked non-empty");
            for g in &entry.generated {
                if self.queue.mark_invalid(g)? == Invalidation::WasProcessed {
                    self.request_rollback(g.key().dst, g.key().ts.as_f64());
                }
            }
            self.queue.requeue(&entry.handle);
            if let Some(c) = &self.causality {
                c.lock().undone.push(entry.exec);
            }
            undone += 1;
        }
        if undone == 0 {
            return Ok(0);
        }
        self.threads[w.me].undone.fetch_add(undone, Ordering::Relaxed);
        let target = inner.len();
        while inner.checkpoints.back().is_some_and(|c| c.index > target) {
            inner.checkpoints.pop_back();
        }
        let ck = inner
            .checkpoints
            .back()
            .ok_or(EngineError::MissingCheckpoint { obj, ts: bound.ts.as_f64() })?;
        inner.state = ck.state.clone();
        inner.ctx = ck.ctx.clone();
        let from = ck.index;
        for i in from..target {
            let ev = *inner.log[(i - inner.base) as usize].handle.event();
            w.scratch.clear();
            execute(self.model, &mut inner.state, &mut inner.ctx, &ev, &mut w.emitter, None, &mut w.scratch)?;
        }
        inner.since_checkpoint = (target - from) as u32;
        inner.last_key = inner.log.back().map(|e| *e.handle.key()).or(inner.floor_key);
        Ok(undone)
    }

    /// Folds entries below GVT into the trace and drops recovery data that
    /// no legal rollback can need any more.
    fn commit(&self, w: &mut Worker, inner: &mut ObjectInner<M::State>, gvt: f64) {
        let mut n = 0;
        while inner.committed < inner.len() {
            let e = &inner.log[(inner.committed - inner.base) as usize];
            let key = *e.handle.key();
            if key.ts.as_f64() >= gvt {
                break;
            }
            inner.trace.push(&key);
            if self.record_trace {
                w.trace.push(key);
            }
            if let Some(c) = &self.causality {
                c.lock().committed.push(e.handle.instance());
            }
            w.last_committed_ts = w.last_committed_ts.max(key.ts.as_f64());
            if e.measured {
                self.threads[w.me].committed_measured.fetch_add(1, Ordering::Relaxed);
            }
            inner.committed += 1;
            n += 1;
        }
        if n == 0 {
            return;
        }
        self.threads[w.me].committed.fetch_add(n, Ordering::Relaxed);
        while inner.checkpoints.len() >= 2 && inner.checkpoints[1].index <= inner.committed {
            inner.checkpoints.pop_front();
        }
        let keep_from = inner.checkpoints.front().map_or(inner.committed, |c| c.index);
        while inner.base < keep_from {
            let e = inner.log.pop_front().expect("entries below committed exist");
            inner.floor_key = Some(*e.handle.key());
            inner.base += 1;
        }
    }

    /// Processes one claimed event on a bound object.
    fn process(
        &self,
        w: &mut Worker,
        obj: ObjectId,
        inner: &mut ObjectInner<M::State>,
        h: EventHandle,
    ) -> Result<(), EngineError> {
        self.service_request(w, obj, inner)?;
        if inner.last_key.is_some_and(|lk| *h.key() < lk)
            && self.rollback(w, obj, inner, *h.key())? > 0 {
                self.threads[w.me].rollbacks.fetch_add(1, Ordering::Relaxed);
            }
        if inner.since_checkpoint >= self.opts.checkpoint_interval {
            inner.checkpoint();
        }
        let ev = *h.event();
        w.generated.clear();
        execute(self.model, &mut inner.state, &mut inner.ctx, &ev, &mut w.emitter, None, &mut w.generated)?;
        let mut handles = Vec::with_capacity(w.generated.len());
        for g in w.generated.drain(..) {
            handles.push(self.queue.insert(g)?);
        }
        let exec = match &self.causality {
            Some(c) => {
                let id = self.exec_ids.fetch_add(1, Ordering::Relaxed);
                c.lock().executions.push(Execution {
                    id,
                    instance: h.instance(),
                    key: ev.key,
                    children: handles.iter().map(EventHandle::instance).collect(),
                });
                id
            }
            None => 0,
        };
        let measured = self.measuring.load(Ordering::Relaxed);
        inner.log.push_back(LogEntry { handle: h.clone(), generated: handles, exec, measured });
        inner.since_checkpoint += 1;
        inner.last_key = Some(ev.key);
        self.threads[w.me].processed.fetch_add(1, Ordering::Relaxed);
        if measured {
            self.threads[w.me].processed_measured.fetch_add(1, Ordering::Relaxed);
        }
        if !self.queue.complete(&h) {
            // Annihilated while we were processing it.
            self.rollback(w, obj, inner, ev.key)?;
            self.threads[w.me].rollbacks.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }

    fn tier(&self, w: &Worker, obj: ObjectId) -> u8 {
        if w.recent.contains(&obj) {
            0
        } else if self.home[obj.index()] == w.node {
            1
        } else {
            2
        }
    }

    /// Binds an object holding a low-timestamp event and processes its batch.
    /// Returns false when nothing could be claimed.
    fn acquire_and_bind(&self, w: &mut Worker) -> Result<bool, EngineError> {
        let mut cands = if self.strict {
            self.queue.candidates(1, 0.0, self.until)
        } else {
            self.queue.candidates(self.opts.candidates, self.delta, self.until)
        };
        if cands.is_empty() {
            return Ok(false);
        }
        match &mut w.rng {
            Some(rng) => cands.shuffle(rng),
            None if self.opts.selection == Selection::Reverse => cands.sort_by_key(|c| std::cmp::Reverse(*c.key())),
            None => cands.sort_by_key(|c| (self.tier(w, c.key().dst), *c.key())),
        }
        for c in cands {
            let obj = c.key().dst;
            let Some(mut guard) = self.objects[obj.index()].inner.try_lock() else { continue };
            let inner = &mut *guard;
            let start = c.key().ts.as_f64();
            self.note(w.me, start);
            if !self.queue.try_claim(&c) {
                continue;
            }
            self.commit(w, inner, self.gvt());
            self.process(w, obj, inner, c)?;
            let end = (start + self.delta).min(self.until);
            if end > start {
                for h in self.queue.pending_for(obj, VirtualTime::from_f64_unchecked(start), end) {
                    self.note(w.me, h.key().ts.as_f64());
                    if self.queue.try_claim(&h) {
                        self.process(w, obj, inner, h)?;
                    }
                }
            }
            self.service_request(w, obj, inner)?;
            w.recent.retain(|&o| o != obj);
            w.recent.push_front(obj);
            w.recent.truncate(4);
            return Ok(true);
        }
        Ok(false)
    }

    /// Services queued rollback requests of objects nobody else holds.
    fn drain_requests(&self, w: &mut Worker, budget: usize) -> Result<(), EngineError> {
        for _ in 0..budget {
            let Some(obj) = self.requests.pop() else { break };
            match self.objects[obj.index()].inner.try_lock() {
                Some(mut inner) => self.service_request(w, obj, &mut inner)?,
                None => {
                    self.requests.push(obj);
                    break;
                }
            }
        }
        Ok(())
    }

    fn start_round(&self) {
        if self.round_active.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_ok() {
            self.acks.store(0, Ordering::SeqCst);
            self.round.fetch_add(1, Ordering::SeqCst);
        }
    }

    /// Acknowledges the current round, if any; called only at idle points.
    fn ack(&self, me: usize) {
        if !self.round_active.load(Ordering::SeqCst) {
            return;
        }
        let r = self.round.load(Ordering::SeqCst);
        let t = &self.threads[me];
        if t.acked.load(Ordering::Relaxed) >= r {
            return;
        }
        t.local_min.store(INF_BITS, Ordering::SeqCst);
        t.acked.store(r, Ordering::Relaxed);
        if self.acks.fetch_add(1, Ordering::SeqCst) + 1 == self.threads.len() {
            self.compute_gvt();
            self.round_active.store(false, Ordering::SeqCst);
        }
    }

    fn compute_gvt(&self) {
        let q = self.queue.min_pending_ts().unwrap_or(f64::INFINITY);
        let r = self.objects.iter().map(|s| s.request.load(Ordering::SeqCst)).min().unwrap_or(INF_BITS);
        let t = self.threads.iter().map(|t| t.local_min.load(Ordering::SeqCst)).min().unwrap_or(INF_BITS);
        let g = q.min(f64::from_bits(r)).min(f64::from_bits(t));
        let old = self.gvt();
        debug_assert!(g >= old, "GVT moved backwards: {old} -> {g}");
        let g = g.max(old);
        self.gvt.store(g.to_bits(), Ordering::SeqCst);
        let mut history = self.gvt_history.lock();
        if history.len() < GVT_HISTORY_CAP {
            history.push(g);
        }
        drop(history);
        if g.is_finite() {
            let n = self.queue.fossil_collect(g);
            self.reclaimed.fetch_add(n as u64, Ordering::Relaxed);
        }
    }

    /// `(processed, undone, committed, rollbacks)` over all threads.
    fn totals(&self) -> (u64, u64, u64, u64) {
        self.threads.iter().fold((0, 0, 0, 0), |acc, t| {
            (
                acc.0 + t.processed.load(Ordering::Relaxed),
                acc.1 + t.undone.load(Ordering::Relaxed),
                acc.2 + t.committed.load(Ordering::Relaxed),
                acc.3 + t.rollbacks.load(Ordering::Relaxed),
            )
        })
    }

    fn worker_loop(&self, w: &mut Worker, clock: Option<&Mutex<WallClock>>, stop: Stop) -> Result<(), EngineError> {
        let mut spins = 0u32;
        let mut iter = 0u64;
        loop {
            if self.stop.load(Ordering::SeqCst) {
                return Ok(());
            }
            self.ack(w.me);
            iter += 1;
            if let Some(clock) = clock.filter(|_| iter.is_multiple_of(32)) {
                let (p, u, c, _) = self.totals();
                let done = match stop {
                    Stop::WallClock(_) => {
                        let mut clock = clock.lock();
                        let done = clock.poll(c, p);
                        if clock.measuring() {
                            self.measuring.store(true, Ordering::Relaxed);
                        }
                        done
                    }
                    Stop::Events(n) => p - u >= n,
                    Stop::Until(_) => false,
                };
                if done {
                    self.stop.store(true, Ordering::SeqCst);
                    return Ok(());
                }
            }
            self.drain_requests(w, 4)?;
            if self.acquire_and_bind(w)? {
                spins = 0;
                w.binds += 1;
                if w.binds.is_multiple_of(self.opts.gvt_period) {
                    self.start_round();
                }
            } else {
                if self.gvt() >= self.until {
                    self.stop.store(true, Ordering::SeqCst);
                    return Ok(());
                }
                self.start_round();
                backoff(&mut spins);
            }
        }
    }
}

pub fn run_optimistic<M: Model>(
    model: &M,
    seed: u64,
    stop: Stop,
    cfg: &EngineConfig,
) -> Result<RunOutcome, EngineError> {
    run_optimistic_with(model, seed, stop, cfg, &OptimisticOptions::default()).map(|r| r.outcome)
}

pub fn run_optimistic_with<M: Model>(
    model: &M,
    seed: u64,
    stop: Stop,
    cfg: &EngineConfig,
    opts: &OptimisticOptions,
) -> Result<OptimisticRun, EngineError> {
    stop.validate()?;
    let n = model.n_objects();
    let threads = cfg.threads.max(1);
    let placement = cfg.placement_for(n);
    let lookahead = model.lookahead().max(0.0);

    let mut inits = Vec::with_capacity(n);
    let mut initial_events = Vec::new();
    for i in 0..n {
        let init = init_object(model, seed, ObjectId::from(i))?;
        initial_events.extend(init.events.iter().copied());
        inits.push((init.state, init.ctx));
    }
    let width = opts.bucket_width.filter(|w| *w > 0.0).unwrap_or_else(|| {
        let ts: Vec<f64> = initial_events.iter().map(|e| e.ts().as_f64()).collect();
        SharedCalendarQueue::estimate_width(&ts, if lookahead > 0.0 { lookahead } else { 1.0 })
    });
    let queue = SharedCalendarQueue::new(width)?;
    for e in initial_events {
        queue.insert(e)?;
    }
    let delta = opts.delta.unwrap_or(width).max(0.0);
    let strict = threads == 1 && opts.selection == Selection::Tiered;
    let delta = if strict { delta.min(lookahead) } else { delta };

    let objects = inits
        .into_iter()
        .map(|(state, ctx)| {
            let mut inner = ObjectInner {
                state,
                ctx,
                log: VecDeque::new(),
                base: 0,
                committed: 0,
                checkpoints: VecDeque::new(),
                since_checkpoint: 0,
                trace: TraceDigest::default(),
                last_key: None,
                floor_key: None,
            };
            inner.checkpoint();
            Slot { inner: Mutex::new(inner), request: CachePadded::new(AtomicU64::new(INF_BITS)) }
        })
        .collect();

    let shared = Shared {
        model,
        queue,
        objects,
        home: placement.object_home.clone(),
        requests: SegQueue::new(),
        threads: (0..threads)
            .map(|_| CachePadded::new(ThreadSlot { local_min: AtomicU64::new(INF_BITS), ..Default::default() }))
            .collect(),
        delta,
        until: stop.until(),
        strict,
        opts: opts.clone(),
        record_trace: cfg.record_trace,
        gvt: CachePadded::new(AtomicU64::new(0f64.to_bits())),
        round: CachePadded::new(AtomicU64::new(0)),
        round_active: AtomicBool::new(false),
        acks: AtomicUsize::new(0),
        stop: AtomicBool::new(false),
        error: Mutex::new(None),
        gvt_history: Mutex::new(Vec::new()),
        reclaimed: AtomicU64::new(0),
        exec_ids: AtomicU64::new(0),
        causality: opts.record_causality.then(|| Mutex::new(CausalRecord::default())),
        measuring: AtomicBool::new(false),
    };
    let clock = Mutex::new(WallClock::new(&stop, cfg.warmup_fraction));
    shared.measuring.store(clock.lock().measuring(), Ordering::Relaxed);

    let mut workers: Vec<Worker> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|me| {
                let shared = &shared;
                let placement = &placement;
                let clock = (me == 0).then_some(&clock);
                s.spawn(move || {
                    if cfg.pin {
                        if let Some(cpu) = placement.cpu_of(me) {
                            pin_current_thread(cpu);
                        }
                    }
                    let node = placement.thread_node.get(me).copied().unwrap_or(0);
                    let mut w = Worker::new(me, node, shared.opts.selection);
                    if let Err(e) = shared.worker_loop(&mut w, clock, stop) {
                        shared.fail(e);
                    }
                    w
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("optimistic worker panicked")).collect()
    });
    if let Some(e) = shared.error.lock().take() {
        return Err(e);
    }

    // Single-threaded settle: resolve outstanding cascades, cut every object
    // back to the lowest pending timestamp and commit everything below it.
    let w = &mut workers[0];
    let settle_requests = |w: &mut Worker| -> Result<(), EngineError> {
        while let Some(obj) = shared.requests.pop() {
            let mut inner = shared.objects[obj.index()].inner.lock();
            shared.service_request(w, obj, &mut inner)?;
        }
        Ok(())
    };
    settle_requests(w)?;
    let cut = shared.queue.min_pending_ts().unwrap_or(f64::INFINITY).min(shared.until);
    if cut.is_finite() {
        let bound = EventKey::lower_bound(VirtualTime::from_f64_unchecked(cut));
        for (i, slot) in shared.objects.iter().enumerate() {
            let mut inner = slot.inner.lock();
            shared.rollback(w, ObjectId::from(i), &mut inner, bound)?;
        }
        settle_requests(w)?;
    }
    for slot in &shared.objects {
        let mut inner = slot.inner.lock();
        shared.commit(w, &mut inner, cut);
    }

    let (processed, undone, committed, rollbacks) = shared.totals();
    let (wall, mut measured) = clock.into_inner().finish(committed, processed);
    measured.committed = shared.threads.iter().map(|t| t.committed_measured.load(Ordering::Relaxed)).sum();
    measured.processed = shared.threads.iter().map(|t| t.processed_measured.load(Ordering::Relaxed)).sum();
    let inners: Vec<ObjectInner<M::State>> = shared.objects.into_iter().map(|s| s.inner.into_inner()).collect();
    let fingerprint = fingerprint_states(model, inners.iter().map(|o| (&o.state, &o.trace)));
    let end_time = workers.iter().map(|w| w.last_committed_ts).fold(0.0, f64::max);
    let trace = cfg.record_trace.then(|| {
        let mut t: Vec<EventKey> = workers.iter_mut().flat_map(|w| std::mem::take(&mut w.trace)).collect();
        t.sort_unstable_by_key(|k| (k.dst, *k));
        t
    });
    Ok(OptimisticRun {
        outcome: RunOutcome {
            metrics: RunMetrics {
                committed_events: committed,
                processed_events: processed,
                rollbacks,
                wall_seconds: wall,
                measured,
                end_time,
            },
            fingerprint,
            trace,
        },
        report: OptimisticReport {
            undone,
            gvt_history: shared.gvt_history.into_inner(),
            reclaimed: shared.reclaimed.into_inner(),
            bucket_width: width,
            delta,
            causality: shared.causality.map(Mutex::into_inner),
        },
    })
}
