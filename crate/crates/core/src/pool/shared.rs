//! Fully shared concurrent calendar queue.
//!
//! Buckets are insert-only sorted linked lists of reference-counted nodes.
//! Nodes are never unlinked: fetching flips a status byte with a CAS and
//! invalidation leaves a tombstone. Whole segments of buckets are reclaimed
//! once they fall entirely below the fossil horizon; traversals are protected
//! by epoch pinning, so a segment is only freed after every thread that could
//! still be walking it has moved on.
//!
//! The cursor packs the lowest bucket that may hold a pending event with a
//! 32-bit epoch. Any operation that makes an event pending at or below the
//! cursor bumps the epoch, so a fetcher that found its bucket empty cannot
//! advance past an event that was published while it was scanning.

use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicPtr, AtomicU64, AtomicU8, AtomicUsize, Ordering};
use std::sync::Arc;

use crossbeam::epoch::{self, Guard};

use super::bucket_index;
use crate::error::PoolError;
use crate::time::{Event, EventKey, EventStatus, ObjectId, VirtualTime};

const SEGMENT_BUCKETS: u64 = 256;
pub const DEFAULT_SEGMENTS: usize = 1 << 20;

pub struct EventNode {
    event: Event,
    instance: u64,
    status: AtomicU8,
    collected: AtomicBool,
    next: AtomicPtr<EventNode>,
}

/// Stable reference to an inserted event, valid until fossil collection.
#[derive(Clone)]
pub struct EventHandle(Arc<EventNode>);

impl EventHandle {
    #[inline]
    pub fn event(&self) -> &Event {
        &self.0.event
    }

    #[inline]
    pub fn key(&self) -> &EventKey {
        &self.0.event.key
    }

    #[inline]
    pub fn status(&self) -> EventStatus {
        EventStatus::from_u8(self.0.status.load(Ordering::Acquire))
    }

    /// Unique id of this insertion; re-sending an identical key after a
    /// rollback produces a different instance.
    #[inline]
    pub fn instance(&self) -> u64 {
        self.0.instance
    }

    pub fn is_collected(&self) -> bool {
        self.0.collected.load(Ordering::Acquire)
    }

    #[inline]
    fn cas(&self, from: EventStatus, to: EventStatus) -> bool {
        self.0.status.compare_exchange(from as u8, to as u8, Ordering::AcqRel, Ordering::Acquire).is_ok()
    }

    pub fn same(&self, other: &EventHandle) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl std::fmt::Debug for EventHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventHandle")
            .field("key", self.key())
            .field("instance", &self.instance())
            .field("status", &self.status())
            .finish()
    }
}

/// Prior status reported by [`SharedCalendarQueue::mark_invalid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Invalidation {
    WasPending,
    WasInProcessing,
    WasProcessed,
    WasInvalidated,
}

struct Bucket {
    head: AtomicPtr<EventNode>,
}

struct Segment {
    buckets: Box<[Bucket]>,
}

impl Segment {
    fn new() -> Self {
        Segment { buckets: (0..SEGMENT_BUCKETS).map(|_| Bucket { head: AtomicPtr::new(ptr::null_mut()) }).collect() }
    }
}

impl Drop for Segment {
    fn drop(&mut self) {
        for b in self.buckets.iter() {
            let mut p = b.head.load(Ordering::Acquire);
            while !p.is_null() {
                // SAFETY: every link holds one strong count created by `Arc::into_raw`.
                let node = unsafe { Arc::from_raw(p) };
                node.collected.store(true, Ordering::Release);
                p = node.next.load(Ordering::Acquire);
            }
        }
    }
}

#[inline]
fn pack(bucket: u64, epoch: u64) -> u64 {
    (bucket << 32) | (epoch & 0xFFFF_FFFF)
}

#[inline]
fn unpack(c: u64) -> (u64, u64) {
    (c >> 32, c & 0xFFFF_FFFF)
}

pub struct SharedCalendarQueue {
    width: f64,
    segments: Box<[AtomicPtr<Segment>]>,
    cursor: AtomicU64,
    max_bucket: AtomicU64,
    horizon: AtomicU64,
    low_segment: AtomicUsize,
    instances: AtomicU64,
}

// SAFETY: all shared state is atomics; nodes are `Arc`s of `Sync` data.
unsafe impl Send for SharedCalendarQueue {}
unsafe impl Sync for SharedCalendarQueue {}

impl SharedCalendarQueue {
    pub fn new(bucket_width: f64) -> Result<Self, PoolError> {
        Self::with_segments(bucket_width, DEFAULT_SEGMENTS)
    }

    /// Queue addressing `n_segments * 256` buckets of `bucket_width` each.
    pub fn with_segments(bucket_width: f64, n_segments: usize) -> Result<Self, PoolError> {
        if !(bucket_width > 0.0) || !bucket_width.is_finite() {
            return Err(PoolError::InvalidWidth(bucket_width));
        }
        let n_segments = n_segments.clamp(1, 1 << 24);
        Ok(SharedCalendarQueue {
            width: bucket_width,
            segments: (0..n_segments).map(|_| AtomicPtr::new(ptr::null_mut())).collect(),
            cursor: AtomicU64::new(0),
            max_bucket: AtomicU64::new(0),
            horizon: AtomicU64::new(0f64.to_bits()),
            low_segment: AtomicUsize::new(0),
            instances: AtomicU64::new(0),
        })
    }

    /// Mean inter-event spacing of the first `min(4096, n)` timestamps, the
    /// width that keeps bucket occupancy near one.
    pub fn estimate_width(timestamps: &[f64], fallback: f64) -> f64 {
        let mut ts: Vec<f64> = timestamps.to_vec();
        ts.sort_by(f64::total_cmp);
        ts.truncate(4096);
        if ts.len() >= 2 {
            let span = ts[ts.len() - 1] - ts[0];
            let w = span / (ts.len() - 1) as f64;
            if w > 0.0 && w.is_finite() {
                return w;
            }
        }
        if fallback > 0.0 && fallback.is_finite() {
            fallback
        } else {
            1.0
        }
    }

    pub fn bucket_width(&self) -> f64 {
        self.width
    }

    pub fn horizon(&self) -> f64 {
        f64::from_bits(self.horizon.load(Ordering::Acquire))
    }

    fn capacity_buckets(&self) -> u64 {
        self.segments.len() as u64 * SEGMENT_BUCKETS
    }

    fn segment<'g>(&self, s: usize, _guard: &'g Guard) -> Option<&'g Segment> {
        let p = self.segments.get(s)?.load(Ordering::Acquire);
        // SAFETY: segments are freed only through `defer_unchecked`, which
        // waits for every guard pinned before the unlink.
        unsafe { p.as_ref() }
    }

    fn segment_or_alloc<'g>(&self, s: usize, guard: &'g Guard) -> &'g Segment {
        if let Some(seg) = self.segment(s, guard) {
            return seg;
        }
        let fresh = Box::into_raw(Box::new(Segment::new()));
        match self.segments[s].compare_exchange(ptr::null_mut(), fresh, Ordering::AcqRel, Ordering::Acquire) {
            // SAFETY: we just published `fresh`; it lives until reclaimed.
            Ok(_) => unsafe { &*fresh },
            Err(existing) => {
                // SAFETY: `fresh` was never shared.
                drop(unsafe { Box::from_raw(fresh) });
                unsafe { &*existing }
            }
        }
    }

    #[inline]
    fn bucket<'g>(&self, b: u64, guard: &'g Guard) -> Option<&'g Bucket> {
        let seg = self.segment((b / SEGMENT_BUCKETS) as usize, guard)?;
        Some(&seg.buckets[(b % SEGMENT_BUCKETS) as usize])
    }

    /// Makes bucket `b` visible to fetchers: lowers the cursor if needed and
    /// bumps the epoch when `b` is at or below it.
    fn publish_at(&self, b: u64) {
        let mut cur = self.cursor.load(Ordering::SeqCst);
        loop {
            let (cb, ce) = unpack(cur);
            if b > cb {
                return;
            }
            match self.cursor.compare_exchange_weak(cur, pack(b, ce + 1), Ordering::SeqCst, Ordering::SeqCst) {
                Ok(_) => return,
                Err(actual) => cur = actual,
            }
        }
    }

    pub fn insert(&self, ev: Event) -> Result<EventHandle, PoolError> {
        let horizon = self.horizon();
        if ev.ts().as_f64() < horizon {
            return Err(PoolError::StaleInsert { ts: ev.ts().as_f64(), horizon });
        }
        let b = bucket_index(ev.ts(), self.width);
        if b >= self.capacity_buckets() {
            return Err(PoolError::HorizonExceeded { ts: ev.ts().as_f64() });
        }
        let guard = epoch::pin();
        let seg = self.segment_or_alloc((b / SEGMENT_BUCKETS) as usize, &guard);
        let bucket = &seg.buckets[(b % SEGMENT_BUCKETS) as usize];
        self.max_bucket.fetch_max(b, Ordering::SeqCst);

        let node = Arc::new(EventNode {
            event: ev,
            instance: self.instances.fetch_add(1, Ordering::Relaxed),
            status: AtomicU8::new(EventStatus::Pending as u8),
            collected: AtomicBool::new(false),
            next: AtomicPtr::new(ptr::null_mut()),
        });
        let handle = EventHandle(node.clone());
        let raw = Arc::into_raw(node) as *mut EventNode;
        let key = ev.key;
        'retry: loop {
            let mut prev = &bucket.head;
            let mut cur = prev.load(Ordering::Acquire);
            // SAFETY: nodes reachable from a live segment stay allocated.
            while let Some(n) = unsafe { cur.as_ref() } {
                if n.event.key >= key {
                    break;
                }
                prev = &n.next;
                cur = prev.load(Ordering::Acquire);
            }
            unsafe { (*raw).next.store(cur, Ordering::Relaxed) };
            if prev.compare_exchange(cur, raw, Ordering::AcqRel, Ordering::Acquire).is_ok() {
                break 'retry;
            }
        }
        self.publish_at(b);
        Ok(handle)
    }

    /// Claims the minimum-key pending event, moving it to `InProcessing`.
    pub fn fetch_min(&self) -> Option<EventHandle> {
        let guard = epoch::pin();
        loop {
            let cur = self.cursor.load(Ordering::SeqCst);
            let (b, _) = unpack(cur);
            if b > self.max_bucket.load(Ordering::SeqCst) {
                return None;
            }
            if let Some(bucket) = self.bucket(b, &guard) {
                let mut p = bucket.head.load(Ordering::Acquire);
                while let Some(n) = unsafe { p.as_ref() } {
                    if n.status.load(Ordering::Acquire) == EventStatus::Pending as u8
                        && n.status
                            .compare_exchange(
                                EventStatus::Pending as u8,
                                EventStatus::InProcessing as u8,
                                Ordering::AcqRel,
                                Ordering::Acquire,
                            )
                            .is_ok()
                    {
                        return Some(handle_from_raw(p));
                    }
                    p = n.next.load(Ordering::Acquire);
                }
            }
            self.try_advance(cur, &guard);
        }
    }

    /// Moves the cursor past bucket `b` (or past a whole missing segment).
    /// Fails harmlessly if anything was published meanwhile.
    fn try_advance(&self, cur: u64, guard: &Guard) {
        let (b, e) = unpack(cur);
        let s = b / SEGMENT_BUCKETS;
        let next = if self.segment(s as usize, guard).is_none() { (s + 1) * SEGMENT_BUCKETS } else { b + 1 };
        let next = next.min(self.max_bucket.load(Ordering::SeqCst) + 1);
        let _ = self.cursor.compare_exchange(cur, pack(next.max(b + 1), e), Ordering::SeqCst, Ordering::SeqCst);
    }

    /// Up to `limit` pending events in key order, starting from the lowest,
    /// restricted to `ts < first_ts + band` and `ts < until`. Nothing is claimed.
    pub fn candidates(&self, limit: usize, band: f64, until: f64) -> Vec<EventHandle> {
        let mut out = Vec::new();
        let guard = epoch::pin();
        let mut cur = self.cursor.load(Ordering::SeqCst);
        let mut b = unpack(cur).0;
        let mut bound = until;
        let max = self.max_bucket.load(Ordering::SeqCst);
        while b <= max && out.len() < limit {
            if b as f64 * self.width >= bound {
                break;
            }
            let mut any = false;
            if let Some(bucket) = self.bucket(b, &guard) {
                let mut p = bucket.head.load(Ordering::Acquire);
                while let Some(n) = unsafe { p.as_ref() } {
                    if n.status.load(Ordering::Acquire) == EventStatus::Pending as u8 {
                        let ts = n.event.key.ts.as_f64();
                        if out.is_empty() {
                            bound = bound.min(ts + band);
                            if ts >= until {
                                return out;
                            }
                        }
                        if ts >= bound && !(out.is_empty()) {
                            return out;
                        }
                        any = true;
                        out.push(handle_from_raw(p));
                        if out.len() >= limit {
                            return out;
                        }
                    }
                    p = n.next.load(Ordering::Acquire);
                }
            }
            if !any && out.is_empty() {
                // Only the cursor bucket can be skipped cooperatively.
                if unpack(cur).0 == b {
                    self.try_advance(cur, &guard);
                    cur = self.cursor.load(Ordering::SeqCst);
                    let nb = unpack(cur).0;
                    b = if nb > b { nb } else { b + 1 };
                    continue;
                }
            }
            b += 1;
        }
        out
    }

    /// Pending events of `obj` with `from <= ts < to`, in key order.
    pub fn pending_for(&self, obj: ObjectId, from: VirtualTime, to: f64) -> Vec<EventHandle> {
        let mut out = Vec::new();
        if to <= from.as_f64() {
            return out;
        }
        let guard = epoch::pin();
        let lo = bucket_index(from, self.width);
        let hi = bucket_index(VirtualTime::from_f64_unchecked(to), self.width).min(self.max_bucket.load(Ordering::SeqCst));
        for b in lo..=hi {
            if let Some(bucket) = self.bucket(b, &guard) {
                let mut p = bucket.head.load(Ordering::Acquire);
                while let Some(n) = unsafe { p.as_ref() } {
                    let ts = n.event.key.ts;
                    if n.event.key.dst == obj
                        && ts >= from
                        && ts.as_f64() < to
                        && n.status.load(Ordering::Acquire) == EventStatus::Pending as u8
                    {
                        out.push(handle_from_raw(p));
                    }
                    p = n.next.load(Ordering::Acquire);
                }
            }
        }
        out
    }

    /// `Pending -> InProcessing` on a specific event.
    pub fn try_claim(&self, h: &EventHandle) -> bool {
        h.cas(EventStatus::Pending, EventStatus::InProcessing)
    }

    /// `InProcessing -> Processed`. Fails if the event was invalidated meanwhile.
    pub fn complete(&self, h: &EventHandle) -> bool {
        h.cas(EventStatus::InProcessing, EventStatus::Processed)
    }

    /// Gives a claim back: `InProcessing -> Pending`.
    pub fn release(&self, h: &EventHandle) -> bool {
        let ok = h.cas(EventStatus::InProcessing, EventStatus::Pending);
        if ok {
            self.publish_at(bucket_index(h.key().ts, self.width));
        }
        ok
    }

    /// Re-flags an undone event as pending: `Processed -> Pending`.
    pub fn requeue(&self, h: &EventHandle) -> bool {
        let ok = h.cas(EventStatus::Processed, EventStatus::Pending);
        if ok {
            self.publish_at(bucket_index(h.key().ts, self.width));
        }
        ok
    }

    /// Tombstones the event with one atomic read-modify-write and reports the
    /// prior status. Idempotent.
    pub fn mark_invalid(&self, h: &EventHandle) -> Result<Invalidation, PoolError> {
        if h.is_collected() {
            return Err(PoolError::StaleHandle { key: *h.key() });
        }
        let prior = h.0.status.swap(EventStatus::Invalidated as u8, Ordering::AcqRel);
        Ok(match EventStatus::from_u8(prior) {
            EventStatus::Pending => Invalidation::WasPending,
            EventStatus::InProcessing => Invalidation::WasInProcessing,
            EventStatus::Processed => Invalidation::WasProcessed,
            EventStatus::Invalidated => Invalidation::WasInvalidated,
        })
    }

    /// Smallest timestamp of a pending event at or above the cursor.
    pub fn min_pending_ts(&self) -> Option<f64> {
        let guard = epoch::pin();
        let mut b = unpack(self.cursor.load(Ordering::SeqCst)).0;
        let max = self.max_bucket.load(Ordering::SeqCst);
        while b <= max {
            match self.segment((b / SEGMENT_BUCKETS) as usize, &guard) {
                None => {
                    b = (b / SEGMENT_BUCKETS + 1) * SEGMENT_BUCKETS;
                    continue;
                }
                Some(seg) => {
                    let mut p = seg.buckets[(b % SEGMENT_BUCKETS) as usize].head.load(Ordering::Acquire);
                    while let Some(n) = unsafe { p.as_ref() } {
                        if n.status.load(Ordering::Acquire) == EventStatus::Pending as u8 {
                            return Some(n.event.key.ts.as_f64());
                        }
                        p = n.next.load(Ordering::Acquire);
                    }
                }
            }
            b += 1;
        }
        None
    }

    /// Raises the fossil horizon to `gvt` and reclaims every segment lying
    /// entirely below it. Returns the number of event records reclaimed.
    pub fn fossil_collect(&self, gvt: f64) -> usize {
        if !(gvt > self.horizon()) {
            return 0;
        }
        self.horizon.fetch_max(gvt.to_bits(), Ordering::AcqRel);
        let limit_bucket = bucket_index(VirtualTime::from_f64_unchecked(gvt.min(f64::MAX)), self.width);
        let limit_seg = ((limit_bucket / SEGMENT_BUCKETS) as usize).min(self.segments.len());
        let guard = epoch::pin();
        let mut reclaimed = 0;
        let mut s = self.low_segment.load(Ordering::Acquire);
        while s < limit_seg {
            let p = self.segments[s].swap(ptr::null_mut(), Ordering::AcqRel);
            if !p.is_null() {
                // SAFETY: unlinked above; still valid until the deferred drop.
                let seg = unsafe { &*p };
                for b in seg.buckets.iter() {
                    let mut q = b.head.load(Ordering::Acquire);
                    while let Some(n) = unsafe { q.as_ref() } {
                        n.collected.store(true, Ordering::Release);
                        reclaimed += 1;
                        q = n.next.load(Ordering::Acquire);
                    }
                }
                let addr = p as usize;
                // SAFETY: no new reference can be obtained after the swap.
                unsafe { guard.defer_unchecked(move || drop(Box::from_raw(addr as *mut Segment))) };
            }
            s += 1;
        }
        self.low_segment.fetch_max(s, Ordering::AcqRel);
        guard.flush();
        reclaimed
    }

    /// Claims and completes every remaining pending event, in key order.
    /// Single-threaded helper for draining and inspection.
    pub fn drain_pending(&self) -> Vec<Event> {
        let mut out = Vec::new();
        while let Some(h) = self.fetch_min() {
            self.complete(&h);
            out.push(*h.event());
        }
        out
    }
}

impl Drop for SharedCalendarQueue {
    fn drop(&mut self) {
        for s in self.segments.iter() {
            let p = s.swap(ptr::null_mut(), Ordering::AcqRel);
            if !p.is_null() {
                // SAFETY: `&mut self` proves no other thread holds a reference.
                drop(unsafe { Box::from_raw(p) });
            }
        }
    }
}

#[inline]
fn handle_from_raw(p: *mut EventNode) -> EventHandle {
    // SAFETY: `p` is kept alive by its list link; we add our own count.
    unsafe {
        Arc::increment_strong_count(p as *const EventNode);
        EventHandle(Arc::from_raw(p as *const EventNode))
    }
}
