use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use pdes::pool::{Invalidation, SharedCalendarQueue};
use pdes::time::{Event, EventKey, ObjectId, Payload, VirtualTime};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn ev(ts: f64, src: u32, seq: u64) -> Event {
    Event {
        key: EventKey { ts: VirtualTime::new(ts).unwrap(), dst: ObjectId(seq as u32 % 97), src: ObjectId(src), seq },
        kind: 0,
        payload: Payload::EMPTY,
    }
}

#[test]
fn parallel_inserts_drain_to_sorted_multiset() {
    let q = Arc::new(SharedCalendarQueue::with_segments(1.0, 1 << 12).unwrap());
    let hs: Vec<_> = (0..8u32)
        .map(|t| {
            let q = q.clone();
            std::thread::spawn(move || {
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(t as u64);
                let mut mine = Vec::with_capacity(100_000);
                for i in 0..100_000u64 {
                    let e = ev(rng.random_range(0.0..100_000.0), t, i);
                    q.insert(e).unwrap();
                    mine.push(e.key);
                }
                mine
            })
        })
        .collect();
    let mut expect: Vec<EventKey> = hs.into_iter().flat_map(|h| h.join().unwrap()).collect();
    expect.sort();
    let got: Vec<EventKey> = q.drain_pending().into_iter().map(|e| e.key).collect();
    assert!(got.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(got, expect);
}

#[test]
fn concurrent_fetchers_never_share_an_event() {
    let q = Arc::new(SharedCalendarQueue::with_segments(0.5, 1 << 10).unwrap());
    let producers_done = Arc::new(AtomicUsize::new(0));
    let mut handles = Vec::new();
    for t in 0..4u32 {
        let q = q.clone();
        let done = producers_done.clone();
        handles.push(std::thread::spawn(move || {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(100 + t as u64);
            let mut inserted = Vec::new();
            for i in 0..20_000u64 {
                let e = ev(rng.random_range(0.0..5_000.0), t, i);
                q.insert(e).unwrap();
                inserted.push(e.key);
            }
            done.fetch_add(1, Ordering::SeqCst);
            (inserted, Vec::new())
        }));
    }
    for _ in 0..4 {
        let q = q.clone();
        let done = producers_done.clone();
        handles.push(std::thread::spawn(move || {
            let mut fetched = Vec::new();
            loop {
                let finished = done.load(Ordering::SeqCst) == 4;
                match q.fetch_min() {
                    Some(h) => {
                        assert!(q.complete(&h));
                        fetched.push(*h.key());
                    }
                    None if finished => break,
                    None => std::thread::yield_now(),
                }
            }
            (Vec::new(), fetched)
        }));
    }
    let mut inserted = Vec::new();
    let mut fetched = Vec::new();
    for h in handles {
        let (i, f) = h.join().unwrap();
        inserted.extend(i);
        fetched.extend(f);
    }
    let unique: HashSet<EventKey> = fetched.iter().copied().collect();
    assert_eq!(unique.len(), fetched.len(), "an event was fetched twice");
    inserted.sort();
    fetched.sort();
    assert_eq!(fetched, inserted);
}

#[test]
fn invalidation_races_conserve_events() {
    // completed + invalidated-before-completion + residual == inserted
    let q = Arc::new(SharedCalendarQueue::with_segments(1.0, 1 << 8).unwrap());
    let handles: Vec<_> = (0..20_000u64).map(|i| q.insert(ev((i % 5_000) as f64 + 0.25, 0, i)).unwrap()).collect();
    let handles = Arc::new(handles);
    let stop = Arc::new(AtomicBool::new(false));
    let fetchers: Vec<_> = (0..3)
        .map(|_| {
            let q = q.clone();
            let stop = stop.clone();
            std::thread::spawn(move || {
                let mut got = Vec::new();
                while !stop.load(Ordering::SeqCst) {
                    match q.fetch_min() {
                        Some(h) => {
                            if q.complete(&h) {
                                got.push(*h.key());
                            }
                        }
                        None => break,
                    }
                }
                got
            })
        })
        .collect();
    let killer = {
        let q = q.clone();
        let handles = handles.clone();
        std::thread::spawn(move || {
            let mut killed_pending = Vec::new();
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
            for _ in 0..5_000 {
                let h = &handles[rng.random_range(0..handles.len())];
                let prior = q.mark_invalid(h).unwrap();
                if matches!(prior, Invalidation::WasPending | Invalidation::WasInProcessing) {
                    killed_pending.push(*h.key());
                }
            }
            killed_pending
        })
    };
    let killed = killer.join().unwrap();
    let mut fetched: Vec<EventKey> = fetchers.into_iter().flat_map(|f| f.join().unwrap()).collect();
    stop.store(true, Ordering::SeqCst);
    let residual: Vec<EventKey> = q.drain_pending().into_iter().map(|e| e.key).collect();
    // Completed-then-invalidated events were still fetched exactly once.
    let mut all = Vec::new();
    all.append(&mut fetched);
    all.extend(killed);
    all.extend(residual);
    all.sort();
    let mut expect: Vec<EventKey> = handles.iter().map(|h| *h.key()).collect();
    expect.sort();
    assert_eq!(all, expect);
}

#[derive(Clone, Copy)]
enum Op {
    Insert { key: EventKey, end: u64 },
    Fetch { key: Option<EventKey>, start: u64, end: u64 },
}

#[test]
fn fetch_min_is_linearizable_at_small_scale() {
    // Oracle: for a fetch F returning e, any smaller event whose insert ended
    // before F started must have been returned by a fetch that started before
    // F ended; an empty fetch likewise may not ignore a completed insert.
    for round in 0..200u64 {
        let q = Arc::new(SharedCalendarQueue::with_segments(1.0, 4).unwrap());
        let clock = Arc::new(AtomicU64::new(0));
        let threads: Vec<_> = (0..3u32)
            .map(|t| {
                let q = q.clone();
                let clock = clock.clone();
                std::thread::spawn(move || {
                    let mut rng = Xoshiro256PlusPlus::seed_from_u64(round * 10 + t as u64);
                    let mut log = Vec::new();
                    for i in 0..30u64 {
                        if rng.random_bool(0.55) {
                            let e = ev(rng.random_range(0.0..20.0), t, i);
                            q.insert(e).unwrap();
                            let end = clock.fetch_add(1, Ordering::SeqCst);
                            log.push(Op::Insert { key: e.key, end });
                        } else {
                            let start = clock.fetch_add(1, Ordering::SeqCst);
                            let h = q.fetch_min();
                            let end = clock.fetch_add(1, Ordering::SeqCst);
                            if let Some(h) = &h {
                                q.complete(h);
                            }
                            log.push(Op::Fetch { key: h.map(|h| *h.key()), start, end });
                        }
                    }
                    log
                })
            })
            .collect();
        let log: Vec<Op> = threads.into_iter().flat_map(|t| t.join().unwrap()).collect();
        let inserts: Vec<(EventKey, u64)> =
            log.iter().filter_map(|o| if let Op::Insert { key, end } = o { Some((*key, *end)) } else { None }).collect();
        let fetch_start: HashMap<EventKey, u64> = log
            .iter()
            .filter_map(|o| if let Op::Fetch { key: Some(k), start, .. } = o { Some((*k, *start)) } else { None })
            .collect();
        for op in &log {
            if let Op::Fetch { key, start, end } = *op {
                for &(other, ins_end) in &inserts {
                    if ins_end >= start || Some(other) == key {
                        continue;
                    }
                    if key.is_some_and(|k| other > k) {
                        continue;
                    }
                    let taken_early = fetch_start.get(&other).is_some_and(|&s| s < end);
                    assert!(taken_early, "round {round}: fetch returned {key:?} while {other:?} was available");
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn single_thread_fetch_order_matches_sort(ts in prop::collection::vec(0.0f64..1_000.0, 0..200), width in 0.05f64..50.0) {
        let q = SharedCalendarQueue::with_segments(width, 1 << 10).unwrap();
        let mut keys = Vec::new();
        for (i, t) in ts.iter().enumerate() {
            let e = ev(*t, 1, i as u64);
            q.insert(e).unwrap();
            keys.push(e.key);
        }
        keys.sort();
        let got: Vec<EventKey> = q.drain_pending().into_iter().map(|e| e.key).collect();
        prop_assert_eq!(got, keys);
    }
}
