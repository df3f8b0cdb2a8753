//! Parallel engines against the sequential oracle on the same model and seed.

use std::fmt;

use pdes::engine::{
    aligned_until, first_divergence, run_conservative_with, run_optimistic_with, run_sequential, ConservativeOptions,
    EngineConfig, OptimisticOptions, RunOutcome, Stop,
};
use pdes::model::Model;
use pdes::models::Workload;
use pdes::pool::bucket_index;
use pdes::time::EventKey;
use pdes::topology::{Placement, Topology};

use crate::config::{EngineKind, SweepSpec};
use crate::error::BenchError;
use crate::sweep::Hooks;

/// Committed-event budget of the sequential probe when none is given.
pub const DEFAULT_BUDGET: u64 = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub engine: EngineKind,
    pub threads: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub until: f64,
    pub oracle_events: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "oracle: {} committed events, stop at T={}", self.oracle_events, self.until)?;
        for c in &self.checks {
            let status = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "{status} {:<12} t={:<3} {:<12} {}", c.engine, c.threads, c.name, c.detail)?;
        }
        Ok(())
    }
}

pub fn fmt_key(k: &EventKey) -> String {
    format!("(ts={}, dst={}, src={}, seq={})", k.ts, k.dst, k.src, k.seq)
}

fn divergence_detail(expected: &[EventKey], got: &[EventKey]) -> Option<String> {
    let (i, a, b) = first_divergence(expected, got)?;
    let show = |k: Option<EventKey>| k.as_ref().map_or_else(|| "end of trace".to_string(), fmt_key);
    Some(format!("first divergence at position {i}: expected {} got {}", show(a), show(b)))
}

struct Harness<'a> {
    checks: Vec<Check>,
    oracle: &'a RunOutcome,
}

impl Harness<'_> {
    fn check(&mut self, engine: EngineKind, threads: usize, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { engine, threads, name, passed, detail });
    }

    fn compare(&mut self, engine: EngineKind, threads: usize, out: &RunOutcome) {
        let o = self.oracle;
        let fp = out.fingerprint == o.fingerprint;
        self.check(engine, threads, "fingerprint", fp, format!("{:016x} vs {:016x}", out.fingerprint.0, o.fingerprint.0));
        let n = out.metrics.committed_events == o.metrics.committed_events;
        self.check(
            engine,
            threads,
            "committed",
            n,
            format!("{} vs {}", out.metrics.committed_events, o.metrics.committed_events),
        );
        let (expected, got) = (o.trace.as_deref().unwrap_or(&[]), out.trace.as_deref().unwrap_or(&[]));
        match divergence_detail(expected, got) {
            None => self.check(engine, threads, "trace", true, format!("{} keys identical", got.len())),
            Some(d) => self.check(engine, threads, "trace", false, d),
        }
        let m = &out.metrics;
        self.check(
            engine,
            threads,
            "accounting",
            m.committed_events <= m.processed_events,
            format!("committed {} processed {}", m.committed_events, m.processed_events),
        );
    }
}

fn run_checks<M: Model>(
    model: &M,
    spec: &SweepSpec,
    topology: &Topology,
    hooks: Hooks,
) -> Result<VerifyReport, BenchError> {
    let seed = spec.seed;
    let budget = spec.events.unwrap_or(DEFAULT_BUDGET);
    let seq_cfg = EngineConfig { record_trace: true, ..EngineConfig::default() };
    let probe = run_sequential(model, seed, Stop::Events(budget), &seq_cfg)?;
    let until = aligned_until(probe.metrics.end_time, model.lookahead());
    let oracle = run_sequential(model, seed, Stop::Until(until), &seq_cfg)?;
    let mut h = Harness { checks: Vec::new(), oracle: &oracle };

    let engines: Vec<EngineKind> = match spec.engine {
        EngineKind::Seq => vec![EngineKind::Conservative, EngineKind::Optimistic],
        e => vec![e],
    };
    let stop = Stop::Until(until);
    for &engine in &engines {
        for &threads in &spec.threads {
            // Verification is about correctness, so oversubscription is allowed.
            let placement = topology
                .place(threads, model.n_objects(), spec.placement.resolve(engine))
                .unwrap_or_else(|_| Placement::unpinned(threads, model.n_objects()));
            let cfg = EngineConfig {
                threads,
                placement: Some(placement),
                pin: false,
                warmup_fraction: spec.warmup_fraction,
                record_trace: true,
            };
            match engine {
                EngineKind::Conservative => {
                    let opts = ConservativeOptions { log_dispatch: true, corrupt_order: hooks.corrupt_order };
                    let run = match run_conservative_with(model, seed, stop, &cfg, &opts) {
                        Ok(run) => run,
                        Err(e) => {
                            h.check(engine, threads, "run", false, e.to_string());
                            continue;
                        }
                    };
                    h.compare(engine, threads, &run.outcome);
                    h.check(
                        engine,
                        threads,
                        "rollbacks",
                        run.outcome.metrics.rollbacks == 0,
                        run.outcome.metrics.rollbacks.to_string(),
                    );
                    if let Some(log) = run.log {
                        let l = log.lookahead;
                        let outside = log.dispatched.iter().filter(|(k, key)| bucket_index(key.ts, l) != *k).count();
                        h.check(engine, threads, "window", outside == 0, format!("{outside} events outside their window"));
                        let early =
                            log.scheduled.iter().filter(|(c, s)| s.ts.as_f64() < c.ts.as_f64() + l).count();
                        h.check(engine, threads, "lookahead", early == 0, format!("{early} events scheduled early"));
                        let n = model.n_objects() as u64;
                        let dispensed = log.dispensed.len() as u64;
                        let mut seen = std::collections::HashSet::new();
                        let dup = log.dispensed.iter().filter(|d| !seen.insert(**d)).count();
                        h.check(
                            engine,
                            threads,
                            "dispensing",
                            dup == 0 && dispensed == n * log.windows,
                            format!("{dispensed} IDs over {} windows, {dup} repeated", log.windows),
                        );
                    }
                }
                EngineKind::Optimistic => {
                    let run = match run_optimistic_with(model, seed, stop, &cfg, &OptimisticOptions::default()) {
                        Ok(run) => run,
                        Err(e) => {
                            h.check(engine, threads, "run", false, e.to_string());
                            continue;
                        }
                    };
                    h.compare(engine, threads, &run.outcome);
                    let g = &run.report.gvt_history;
                    let monotone = g.windows(2).all(|w| w[0] <= w[1]);
                    h.check(engine, threads, "gvt", monotone, format!("{} rounds", g.len()));
                    if threads == 1 {
                        let r = run.outcome.metrics.rollbacks;
                        h.check(engine, threads, "rollbacks", r == 0, r.to_string());
                    }
                }
                EngineKind::Seq => unreachable!(),
            }
        }
    }
    Ok(VerifyReport { until, oracle_events: oracle.metrics.committed_events, checks: h.checks })
}

/// Sequential probe for `events` (default 10^5) commits, then every
/// parallel engine and thread count in `spec` to the aligned stop time.
pub fn verify_with(spec: &SweepSpec, topology: &Topology, hooks: Hooks) -> Result<VerifyReport, BenchError> {
    if spec.threads.is_empty() || spec.threads.contains(&0) {
        return Err(BenchError::Usage("thread counts must be positive".into()));
    }
    match spec.workload.build()? {
        Workload::Pcs(m) => run_checks(&m, spec, topology, hooks),
        Workload::Highway(m) => run_checks(&m, spec, topology, hooks),
    }
}

pub fn verify_mode(spec: &SweepSpec, topology: &Topology) -> Result<VerifyReport, BenchError> {
    verify_with(spec, topology, Hooks::default())
}
