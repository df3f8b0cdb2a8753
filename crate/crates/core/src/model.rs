//! The engine/model boundary.
//!
//! A model is a set of `n_objects` independent state machines. The engine owns
//! each object's random stream and sequence counter; the model only sees its
//! own state, the event being handled, the stream and an [`Emitter`].

use crate::error::{EngineError, ModelError};
use crate::rng::RngStream;
use crate::time::{Event, EventKey, ObjectId, Payload, VirtualTime};

pub trait Model: Send + Sync {
    type State: Clone + Send + Sync;

    fn name(&self) -> &'static str;

    fn n_objects(&self) -> usize;

    /// Lower bound on the virtual-time distance between an event and any
    /// event it schedules. Zero means the model only runs optimistically.
    fn lookahead(&self) -> f64;

    /// Builds the initial state of `obj` and schedules its initial events.
    fn init(&self, obj: ObjectId, rng: &mut RngStream, out: &mut Emitter) -> Self::State;

    fn on_event(
        &self,
        state: &mut Self::State,
        event: &Event,
        rng: &mut RngStream,
        out: &mut Emitter,
    ) -> Result<(), ModelError>;

    /// Canonical byte encoding used for fingerprinting.
    fn state_bytes(&self, state: &Self::State, buf: &mut Vec<u8>);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Emitted {
    pub ts: f64,
    pub dst: ObjectId,
    pub kind: u16,
    pub payload: Payload,
}

/// Collects the events scheduled by one `init` or `on_event` call.
#[derive(Debug, Default)]
pub struct Emitter {
    now: f64,
    out: Vec<Emitted>,
}

impl Emitter {
    pub fn new() -> Self {
        Emitter::default()
    }

    pub(crate) fn reset(&mut self, now: VirtualTime) {
        self.now = now.as_f64();
        self.out.clear();
    }

    /// Current virtual time of the handled event (0 during init).
    #[inline]
    pub fn now(&self) -> f64 {
        self.now
    }

    #[inline]
    pub fn schedule(&mut self, ts: f64, dst: ObjectId, kind: u16, payload: Payload) {
        self.out.push(Emitted { ts, dst, kind, payload });
    }

    pub fn emitted(&self) -> &[Emitted] {
        &self.out
    }

    pub(crate) fn drain(&mut self) -> std::vec::Drain<'_, Emitted> {
        self.out.drain(..)
    }
}

/// Engine-side per-object context: the object's random stream and the
/// sequence counter that makes its outgoing keys unique.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectContext {
    pub rng: RngStream,
    pub seq: u64,
}

impl ObjectContext {
    pub fn new(global_seed: u64, obj: ObjectId) -> Self {
        ObjectContext { rng: RngStream::new(global_seed, obj.0 as u64), seq: 0 }
    }

    /// Turns an emitted request into a keyed event sent by `src`.
    pub fn stamp(&mut self, src: ObjectId, e: Emitted) -> Result<Event, EngineError> {
        let ts = VirtualTime::new(e.ts).map_err(|_| EngineError::InvalidTime(e.ts))?;
        let seq = self.seq;
        self.seq += 1;
        Ok(Event { key: EventKey { ts, dst: e.dst, src, seq }, kind: e.kind, payload: e.payload })
    }
}

/// Everything an engine needs after initializing one object.
pub struct InitialObject<S> {
    pub state: S,
    pub ctx: ObjectContext,
    pub events: Vec<Event>,
}

/// Runs `init` for one object and stamps its initial events.
pub fn init_object<M: Model>(model: &M, seed: u64, obj: ObjectId) -> Result<InitialObject<M::State>, EngineError> {
    let mut ctx = ObjectContext::new(seed, obj);
    let mut out = Emitter::new();
    out.reset(VirtualTime::ZERO);
    let state = model.init(obj, &mut ctx.rng, &mut out);
    let mut events = Vec::with_capacity(out.out.len());
    for e in out.drain() {
        if e.dst.index() >= model.n_objects() {
            return Err(EngineError::UnknownObject(e.dst));
        }
        events.push(ctx.stamp(obj, e)?);
    }
    Ok(InitialObject { state, ctx, events })
}
