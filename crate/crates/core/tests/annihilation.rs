mod common;

use std::collections::HashSet;
use std::time::Duration;

use common::causal::{doomed, violations, Chain};
use common::Phold;
use pdes::engine::{run_optimistic_with, run_sequential, EngineConfig, OptimisticOptions, Selection, Stop};
use pdes::time::ObjectId;

fn cfg(threads: usize) -> EngineConfig {
    EngineConfig { record_trace: true, ..EngineConfig::with_threads(threads) }
}

#[test]
fn two_object_cascade_undoes_exactly_the_descendants() {
    let opts = OptimisticOptions {
        selection: Selection::Reverse,
        delta: Some(100.0),
        gvt_period: 1 << 20,
        record_causality: true,
        ..Default::default()
    };
    let run = run_optimistic_with(&Chain, 1, Stop::Until(10.0), &cfg(1), &opts).unwrap();
    let seq = run_sequential(&Chain, 1, Stop::Until(10.0), &cfg(1)).unwrap();
    assert_eq!(run.outcome.trace, seq.trace);
    assert_eq!(run.outcome.fingerprint, seq.fingerprint);

    let rec = run.report.causality.as_ref().unwrap();
    let undone: HashSet<u64> = rec.undone.iter().copied().collect();
    // Latest-first selection runs the send before the local event at 1, so A
    // must roll the send back.
    let first_send = rec.executions.iter().find(|e| e.key.dst == ObjectId(0) && e.key.ts.as_f64() == 2.0).unwrap();
    assert!(undone.contains(&first_send.id));
    let doomed = doomed(rec);
    assert_eq!(doomed.len(), 2, "the receive and its echo");
    let undone_on_b: HashSet<u64> =
        rec.executions.iter().filter(|e| e.key.dst == ObjectId(1) && undone.contains(&e.id)).map(|e| e.instance).collect();
    assert_eq!(undone_on_b, doomed);
    let doomed_ts: Vec<f64> = rec
        .executions
        .iter()
        .filter(|e| doomed.contains(&e.instance))
        .map(|e| e.key.ts.as_f64())
        .collect();
    assert_eq!(doomed_ts, [2.5, 2.75]);
    assert!(violations(rec).is_empty());
    assert_eq!(run.outcome.metrics.committed_events, 4);
    assert!(run.outcome.metrics.rollbacks >= 2);
}

#[test]
fn random_instances_never_commit_rolled_back_descendants() {
    let mut undone_total = 0;
    for i in 0..100u64 {
        let m = Phold { mean: 0.5, ..Phold::new(8, 0.05) };
        let until = 30.0;
        let opts = OptimisticOptions {
            selection: Selection::Chaos { seed: i },
            delta: Some(0.5 + (i % 5) as f64),
            gvt_period: 16 + i % 64,
            checkpoint_interval: 1 + (i % 7) as u32,
            record_causality: true,
            ..Default::default()
        };
        let threads = 1 + (i % 4) as usize;
        let run = run_optimistic_with(&m, i, Stop::Until(until), &cfg(threads), &opts).unwrap();
        let seq = run_sequential(&m, i, Stop::Until(until), &cfg(1)).unwrap();
        assert!((800..1500).contains(&seq.metrics.committed_events), "{}", seq.metrics.committed_events);
        assert_eq!(run.outcome.trace, seq.trace, "instance {i}");
        let rec = run.report.causality.as_ref().unwrap();
        assert_eq!(violations(rec), Vec::<u64>::new(), "instance {i}");
        assert_eq!(rec.committed.len() as u64, seq.metrics.committed_events);
        undone_total += rec.undone.len();
    }
    assert!(undone_total > 1000, "only {undone_total} undone executions");
}

#[test]
fn rollback_after_fossil_collection_still_succeeds() {
    let mut reclaimed = 0;
    for i in 0..20u64 {
        let m = Phold::new(16, 0.02);
        let opts = OptimisticOptions {
            selection: Selection::Chaos { seed: 100 + i },
            delta: Some(3.0),
            gvt_period: 4,
            checkpoint_interval: 3,
            ..Default::default()
        };
        let run = run_optimistic_with(&m, i, Stop::Until(150.0), &cfg(1 + (i % 3) as usize), &opts).unwrap();
        let seq = run_sequential(&m, i, Stop::Until(150.0), &cfg(1)).unwrap();
        assert_eq!(run.outcome.trace, seq.trace);
        assert!(run.outcome.metrics.rollbacks > 0);
        assert!(run.report.gvt_history.windows(2).all(|w| w[0] <= w[1]));
        reclaimed += run.report.reclaimed;
    }
    assert!(reclaimed > 0);
}

#[test]
fn zero_delta_processes_single_events() {
    let m = Phold::new(8, 0.1);
    let opts = OptimisticOptions { delta: Some(0.0), ..Default::default() };
    let seq = run_sequential(&m, 5, Stop::Until(20.0), &cfg(1)).unwrap();
    for t in [1, 2] {
        let run = run_optimistic_with(&m, 5, Stop::Until(20.0), &cfg(t), &opts).unwrap();
        assert_eq!(run.outcome.fingerprint, seq.fingerprint);
    }
}

#[test]
fn event_and_wall_clock_stops() {
    let m = Phold::new(32, 0.1);
    let run = run_optimistic_with(&m, 1, Stop::Events(5_000), &cfg(2), &OptimisticOptions::default()).unwrap();
    let c = run.outcome.metrics;
    assert!(c.committed_events >= 5_000);
    assert!(c.committed_events <= c.processed_events);

    let run = run_optimistic_with(
        &m,
        1,
        Stop::WallClock(Duration::from_millis(300)),
        &cfg(2),
        &OptimisticOptions::default(),
    )
    .unwrap();
    let c = run.outcome.metrics;
    assert!(c.wall_seconds >= 0.3 && c.wall_seconds < 5.0, "{}", c.wall_seconds);
    assert!(c.measured.seconds > 0.0 && c.measured.seconds < c.wall_seconds);
    assert!(c.committed_events > 0);
    assert!(c.measured.committed <= c.measured.processed);
    assert!(c.committed_throughput() <= c.total_throughput());
}
