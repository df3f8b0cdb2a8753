//! Per-object bucketed calendar with one spinlock per bucket.
//!
//! A ring of `n_slots` buckets covers bucket indices `[base, base + n_slots)`;
//! anything outside that range lives in a key-ordered overflow list and is
//! promoted into the ring lazily, when a drain advances `base`.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use super::bucket_index;
use super::spinlock::SpinLock;
use crate::error::PoolError;
use crate::time::{Event, ObjectId, VirtualTime};

pub const DEFAULT_SLOTS: usize = 64;

pub struct ObjectCalendar {
    owner: ObjectId,
    width: f64,
    base: AtomicU64,
    slots: Box<[SpinLock<Vec<Event>>]>,
    overflow: SpinLock<Vec<Event>>,
    len: AtomicUsize,
}

fn insert_sorted(bucket: &mut Vec<Event>, ev: Event) {
    // Scan from the back: new events usually carry the largest timestamp.
    let mut at = bucket.len();
    while at > 0 && bucket[at - 1].key > ev.key {
        at -= 1;
    }
    bucket.insert(at, ev);
}

impl ObjectCalendar {
    pub fn new(owner: ObjectId, width: f64) -> Result<Self, PoolError> {
        Self::with_slots(owner, width, DEFAULT_SLOTS)
    }

    pub fn with_slots(owner: ObjectId, width: f64, n_slots: usize) -> Result<Self, PoolError> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(PoolError::InvalidWidth(width));
        }
        let n_slots = n_slots.max(1);
        Ok(ObjectCalendar {
            owner,
            width,
            base: AtomicU64::new(0),
            slots: (0..n_slots).map(|_| SpinLock::new(Vec::new())).collect(),
            overflow: SpinLock::new(Vec::new()),
            len: AtomicUsize::new(0),
        })
    }

    pub fn owner(&self) -> ObjectId {
        self.owner
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.len.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total number of lock acquisitions that found a bucket word taken.
    pub fn contention(&self) -> u64 {
        self.slots.iter().map(|s| s.contention()).sum::<u64>() + self.overflow.contention()
    }

    fn slot_of(&self, bucket: u64) -> &SpinLock<Vec<Event>> {
        &self.slots[(bucket % self.slots.len() as u64) as usize]
    }

    /// Places `ev` in its bucket in key order, holding only that bucket's lock.
    pub fn insert(&self, ev: Event) -> Result<(), PoolError> {
        if ev.dst() != self.owner {
            return Err(PoolError::DestinationMismatch { owner: self.owner, event_dst: ev.dst() });
        }
        let b = bucket_index(ev.ts(), self.width);
        let base = self.base.load(Ordering::Acquire);
        if b >= base && b - base < self.slots.len() as u64 {
            insert_sorted(&mut self.slot_of(b).lock(), ev);
        } else {
            insert_sorted(&mut self.overflow.lock(), ev);
        }
        self.len.fetch_add(1, Ordering::AcqRel);
        Ok(())
    }

    /// Removes and returns, in key order, the events with `w_start <= ts < w_end`.
    ///
    /// The caller must own the object for the window, and no concurrent
    /// insert may target a timestamp below `w_end`.
    pub fn drain_window(&self, w_start: VirtualTime, w_end: VirtualTime) -> Vec<Event> {
        let mut out = Vec::new();
        if w_start >= w_end {
            return out;
        }
        let in_window = |e: &Event| e.ts() >= w_start && e.ts() < w_end;
        let n = self.slots.len() as u64;
        let base = self.base.load(Ordering::Acquire);
        let first = bucket_index(w_start, self.width).max(base);
        let last = bucket_index(w_end, self.width).min(base + n - 1);
        let mut b = first;
        while b <= last {
            let mut slot = self.slot_of(b).lock();
            if slot.iter().any(in_window) {
                let mut kept = Vec::with_capacity(slot.len());
                for e in slot.drain(..) {
                    if in_window(&e) {
                        out.push(e);
                    } else {
                        kept.push(e);
                    }
                }
                *slot = kept;
            }
            b += 1;
        }
        {
            let mut ov = self.overflow.lock();
            if ov.iter().any(in_window) {
                let before = out.len();
                ov.retain(|e| {
                    if in_window(e) {
                        out.push(*e);
                        false
                    } else {
                        true
                    }
                });
                if out.len() != before {
                    out.sort_unstable_by_key(|a| a.key);
                }
            }
        }
        if !out.is_empty() {
            self.len.fetch_sub(out.len(), Ordering::AcqRel);
        }
        self.advance(bucket_index(w_end, self.width));
        out
    }

    /// Moves `base` over empty buckets below `limit`, then promotes overflow
    /// events that now fall inside the ring.
    fn advance(&self, limit: u64) {
        let mut base = self.base.load(Ordering::Acquire);
        let start = base;
        let n = self.slots.len() as u64;
        while base < limit && self.slot_of(base).lock().is_empty() {
            base += 1;
            if base - start >= n {
                // The whole ring is empty: jump straight to the limit.
                base = limit;
            }
        }
        if base == start {
            return;
        }
        self.base.store(base, Ordering::Release);
        let mut ov = self.overflow.lock();
        if ov.is_empty() {
            return;
        }
        let mut kept = Vec::with_capacity(ov.len());
        for e in ov.drain(..) {
            let b = bucket_index(e.ts(), self.width);
            if b >= base && b - base < n {
                insert_sorted(&mut self.slot_of(b).lock(), e);
            } else {
                kept.push(e);
            }
        }
        *ov = kept;
    }

    /// Smallest pending timestamp, if any. Requires quiescence for an exact answer.
    pub fn min_ts(&self) -> Option<VirtualTime> {
        let slot_min = self.slots.iter().filter_map(|s| s.lock().first().map(|e| e.ts())).min();
        let ov_min = self.overflow.lock().first().map(|e| e.ts());
        match (slot_min, ov_min) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// All pending events in key order, without removing them.
    pub fn snapshot(&self) -> Vec<Event> {
        let mut all: Vec<Event> = self.slots.iter().flat_map(|s| s.lock().clone()).collect();
        all.extend(self.overflow.lock().iter().copied());
        all.sort_unstable_by_key(|a| a.key);
        all
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{EventKey, Payload};
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn ev(ts: f64, dst: u32, seq: u64) -> Event {
        Event {
            key: EventKey { ts: VirtualTime::new(ts).unwrap(), dst: ObjectId(dst), src: ObjectId(0), seq },
            kind: 0,
            payload: Payload::EMPTY,
        }
    }

    fn vt(x: f64) -> VirtualTime {
        VirtualTime::new(x).unwrap()
    }

    #[test]
    fn sorted_within_bucket() {
        let c = ObjectCalendar::new(ObjectId(0), 1.0).unwrap();
        c.insert(ev(4.2, 0, 0)).unwrap();
        c.insert(ev(4.1, 0, 1)).unwrap();
        let got: Vec<f64> = c.drain_window(vt(4.0), vt(5.0)).iter().map(|e| e.ts().as_f64()).collect();
        assert_eq!(got, vec![4.1, 4.2]);
        assert!(c.is_empty());
    }

    #[test]
    fn destination_mismatch() {
        let c = ObjectCalendar::new(ObjectId(3), 1.0).unwrap();
        assert_eq!(
            c.insert(ev(1.0, 4, 0)),
            Err(PoolError::DestinationMismatch { owner: ObjectId(3), event_dst: ObjectId(4) })
        );
    }

    #[test]
    fn window_filter_leaves_outside_events() {
        let c = ObjectCalendar::new(ObjectId(0), 1.0).unwrap();
        for (i, ts) in [0.5, 1.5, 2.5].into_iter().enumerate() {
            c.insert(ev(ts, 0, i as u64)).unwrap();
        }
        let got: Vec<f64> = c.drain_window(vt(1.0), vt(2.0)).iter().map(|e| e.ts().as_f64()).collect();
        assert_eq!(got, vec![1.5]);
        let rest: Vec<f64> = c.snapshot().iter().map(|e| e.ts().as_f64()).collect();
        assert_eq!(rest, vec![0.5, 2.5]);
        assert!(c.drain_window(vt(7.0), vt(8.0)).is_empty());
        assert!(c.drain_window(vt(2.0), vt(2.0)).is_empty());
    }

    #[test]
    fn overflow_events_are_promoted() {
        let c = ObjectCalendar::with_slots(ObjectId(0), 1.0, 4).unwrap();
        c.insert(ev(10.5, 0, 0)).unwrap();
        c.insert(ev(1.5, 0, 1)).unwrap();
        for k in 0..12u32 {
            let got = c.drain_window(vt(k as f64), vt(k as f64 + 1.0));
            match k {
                1 => assert_eq!(got.len(), 1),
                10 => assert_eq!(got[0].ts().as_f64(), 10.5),
                _ => assert!(got.is_empty()),
            }
        }
        assert!(c.is_empty());
    }

    #[test]
    fn drain_matches_naive_filter() {
        // Oracle: filter-then-sort over the full inserted set.
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for case in 0..10_000u64 {
            let width = [0.25, 0.5, 1.0, 3.0][rng.random_range(0..4)];
            let c = ObjectCalendar::with_slots(ObjectId(0), width, rng.random_range(1..8)).unwrap();
            let n = rng.random_range(0..20);
            let mut all = Vec::new();
            for s in 0..n {
                let e = ev(rng.random_range(0.0..10.0), 0, s);
                c.insert(e).unwrap();
                all.push(e);
            }
            let a = rng.random_range(0.0..10.0);
            let b = a + rng.random_range(0.0..4.0);
            let mut expect: Vec<Event> = all.iter().copied().filter(|e| e.ts() >= vt(a) && e.ts() < vt(b)).collect();
            expect.sort_by_key(|x| x.key);
            let got = c.drain_window(vt(a), vt(b));
            assert_eq!(got, expect, "case {case}");
            assert_eq!(c.len(), n as usize - expect.len());
        }
    }

    #[test]
    fn disjoint_buckets_never_contend() {
        let c = std::sync::Arc::new(ObjectCalendar::new(ObjectId(0), 1.0).unwrap());
        let hs: Vec<_> = (0..2u64)
            .map(|t| {
                let c = c.clone();
                std::thread::spawn(move || {
                    for i in 0..20_000u64 {
                        c.insert(ev(t as f64 * 10.0 + 0.5, 0, t * 1_000_000 + i)).unwrap();
                    }
                })
            })
            .collect();
        for h in hs {
            h.join().unwrap();
        }
        assert_eq!(c.contention(), 0);
        assert_eq!(c.len(), 40_000);
    }

    #[test]
    fn concurrent_inserts_drain_to_sorted_multiset() {
        let c = std::sync::Arc::new(ObjectCalendar::new(ObjectId(0), 1.0).unwrap());
        let hs: Vec<_> = (0..4u64)
            .map(|t| {
                let c = c.clone();
                std::thread::spawn(move || {
                    let mut rng = Xoshiro256PlusPlus::seed_from_u64(t);
                    let mut mine = Vec::new();
                    for i in 0..10_000u64 {
                        let e = ev(rng.random_range(0.0..200.0), 0, t * 1_000_000 + i);
                        c.insert(e).unwrap();
                        mine.push(e);
                    }
                    mine
                })
            })
            .collect();
        let mut expect: Vec<Event> = hs.into_iter().flat_map(|h| h.join().unwrap()).collect();
        expect.sort_by_key(|a| a.key);
        let got = c.drain_window(vt(0.0), vt(200.0));
        assert_eq!(got, expect);
    }
}
