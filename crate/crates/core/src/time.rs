//! Virtual time, object identity and the total order over events.
//!
//! Every engine commits events in the order defined by [`EventKey`]:
//! lexicographic on `(ts, dst, src, seq)`. Because `seq` is a per-source
//! counter carried in the source object's engine context, two live events
//! never share a key and the committed sequence is identical no matter
//! which engine (or how many threads) produced it.

use std::cmp::Ordering;
use std::fmt;
use std::hash::Hash;

use crate::error::CoreError;

/// A point in simulation time. Finite and non-negative.
#[derive(Clone, Copy, Default, PartialEq)]
pub struct VirtualTime(f64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0.0);

    /// Rejects NaN, infinities and negative values. `-0.0` is normalized to `0.0`.
    pub fn new(value: f64) -> Result<Self, CoreError> {
        if !value.is_finite() || value < 0.0 {
            return Err(CoreError::InvalidTime(value));
        }
        Ok(VirtualTime(value + 0.0))
    }

    /// Constructs without validation. The caller guarantees the value is
    /// finite and non-negative (engines only derive times from valid ones).
    #[inline]
    pub(crate) const fn from_f64_unchecked(value: f64) -> Self {
        VirtualTime(value)
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.0
    }

    /// Bit pattern whose unsigned ordering matches the time ordering.
    /// Valid because times are never negative.
    #[inline]
    pub fn to_ordered_bits(self) -> u64 {
        self.0.to_bits()
    }

    #[inline]
    pub fn from_ordered_bits(bits: u64) -> f64 {
        f64::from_bits(bits)
    }
}

impl Eq for VirtualTime {}

impl PartialOrd for VirtualTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VirtualTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Debug for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl TryFrom<f64> for VirtualTime {
    type Error = CoreError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        VirtualTime::new(value)
    }
}

/// Index of a simulation object in `[0, n_objects)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub u32);

impl ObjectId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for ObjectId {
    fn from(i: usize) -> Self {
        ObjectId(i as u32)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Unique, totally ordered identity of an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventKey {
    pub ts: VirtualTime,
    pub dst: ObjectId,
    pub src: ObjectId,
    pub seq: u64,
}

impl EventKey {
    /// Smallest possible key at `ts`; every real key at `ts` compares >= to it.
    pub fn lower_bound(ts: VirtualTime) -> Self {
        EventKey { ts, dst: ObjectId(0), src: ObjectId(0), seq: 0 }
    }
}

impl Hash for VirtualTime {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state)
    }
}


/// Lexicographic comparison on `(ts, dst, src, seq)`.
#[inline]
pub fn event_key_cmp(a: &EventKey, b: &EventKey) -> Ordering {
    a.ts.cmp(&b.ts)
        .then(a.dst.cmp(&b.dst))
        .then(a.src.cmp(&b.src))
        .then(a.seq.cmp(&b.seq))
}

impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EventKey {
    fn cmp(&self, other: &Self) -> Ordering {
        event_key_cmp(self, other)
    }
}

/// Model-defined event payload. Two opaque words are enough for every
/// bundled model (slot indices, car ids, remaining call time bits).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Payload(pub [u64; 2]);

impl Payload {
    pub const EMPTY: Payload = Payload([0, 0]);

    pub fn new(a: u64, b: u64) -> Self {
        Payload([a, b])
    }

    pub fn word(&self, i: usize) -> u64 {
        self.0[i]
    }

    pub fn float(&self, i: usize) -> f64 {
        f64::from_bits(self.0[i])
    }
}

/// A timestamped message destined to one simulation object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub key: EventKey,
    pub kind: u16,
    pub payload: Payload,
}

impl Event {
    #[inline]
    pub fn ts(&self) -> VirtualTime {
        self.key.ts
    }

    #[inline]
    pub fn dst(&self) -> ObjectId {
        self.key.dst
    }
}

/// Lifecycle of an event held by the shared pool.
///
/// Allowed moves: `Pending -> InProcessing -> {Processed, Invalidated}`,
/// `Pending -> Invalidated`, and the rollback moves `Processed -> Pending`
/// and `InProcessing -> Pending` (release of a claim).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EventStatus {
    Pending = 0,
    InProcessing = 1,
    Processed = 2,
    Invalidated = 3,
}

impl EventStatus {
    pub(crate) fn from_u8(v: u8) -> Self {
        match v {
            0 => EventStatus::Pending,
            1 => EventStatus::InProcessing,
            2 => EventStatus::Processed,
            _ => EventStatus::Invalidated,
        }
    }
}
