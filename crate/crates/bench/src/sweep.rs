//! Thread-count × sample sweeps.

use pdes::engine::{
    run_conservative, run_conservative_with, run_optimistic, run_sequential, ConservativeOptions, EngineConfig,
    RunOutcome, Stop,
};
use pdes::error::EngineError;
use pdes::model::Model;
use pdes::models::{Balance, Load, ModelKind, Workload};
use pdes::topology::Topology;

use crate::config::{EngineKind, SweepSpec};
use crate::error::BenchError;

/// Mean and sample standard deviation of both throughputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub committed_mean: f64,
    pub committed_std: f64,
    pub total_mean: f64,
    pub total_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub engine: EngineKind,
    pub model: ModelKind,
    pub load: Load,
    pub balance: Balance,
    pub threads: usize,
    /// `None` for the summary row of a configuration.
    pub sample: Option<u32>,
    pub committed_eps: f64,
    pub total_eps: f64,
    /// Mean over samples on summary rows.
    pub rollbacks: f64,
    pub wall_s: f64,
    pub summary: Option<Summary>,
}

/// Test hooks applied to the engine under test.
#[derive(Clone, Copy, Debug, Default)]
pub struct Hooks {
    pub corrupt_order: bool,
}

pub fn run_model<M: Model>(
    engine: EngineKind,
    model: &M,
    seed: u64,
    stop: Stop,
    cfg: &EngineConfig,
    hooks: Hooks,
) -> Result<RunOutcome, EngineError> {
    match engine {
        EngineKind::Seq => run_sequential(model, seed, stop, cfg),
        EngineKind::Conservative if hooks.corrupt_order => {
            let opts = ConservativeOptions { corrupt_order: true, ..Default::default() };
            run_conservative_with(model, seed, stop, cfg, &opts).map(|r| r.outcome)
        }
        EngineKind::Conservative => run_conservative(model, seed, stop, cfg),
        EngineKind::Optimistic => run_optimistic(model, seed, stop, cfg),
    }
}

pub fn run_workload(
    engine: EngineKind,
    workload: &Workload,
    seed: u64,
    stop: Stop,
    cfg: &EngineConfig,
    hooks: Hooks,
) -> Result<RunOutcome, EngineError> {
    match workload {
        Workload::Pcs(m) => run_model(engine, m, seed, stop, cfg, hooks),
        Workload::Highway(m) => run_model(engine, m, seed, stop, cfg, hooks),
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Appends the summary row for the sample rows of one configuration.
pub fn summarize(samples: &[Row]) -> Option<Row> {
    let first = samples.first()?;
    let committed: Vec<f64> = samples.iter().map(|r| r.committed_eps).collect();
    let total: Vec<f64> = samples.iter().map(|r| r.total_eps).collect();
    let (committed_mean, committed_std) = mean_std(&committed);
    let (total_mean, total_std) = mean_std(&total);
    let n = samples.len() as f64;
    Some(Row {
        sample: None,
        committed_eps: committed_mean,
        total_eps: total_mean,
        rollbacks: samples.iter().map(|r| r.rollbacks).sum::<f64>() / n,
        wall_s: samples.iter().map(|r| r.wall_s).sum::<f64>() / n,
        summary: Some(Summary { committed_mean, committed_std, total_mean, total_std }),
        ..first.clone()
    })
}

pub fn engine_config(spec: &SweepSpec, topology: &Topology, threads: usize, n_objects: usize) -> Result<EngineConfig, BenchError> {
    let placement = topology.place(threads, n_objects, spec.placement.resolve(spec.engine))?;
    Ok(EngineConfig {
        threads,
        placement: Some(placement),
        pin: spec.pin,
        warmup_fraction: spec.warmup_fraction,
        record_trace: false,
    })
}

/// Runs every (thread count, sample) pair, rebuilding the model per sample.
/// `progress` sees each row as it is produced.
pub fn run_sweep_with(
    spec: &SweepSpec,
    topology: &Topology,
    mut progress: impl FnMut(&Row),
) -> Result<Vec<Row>, BenchError> {
    spec.validate()?;
    let stop = match spec.events {
        Some(n) => Stop::Events(n),
        None => Stop::WallClock(std::time::Duration::from_secs_f64(spec.duration_s)),
    };
    let w = &spec.workload;
    let mut rows = Vec::new();
    for &threads in &spec.threads {
        let cfg = engine_config(spec, topology, threads, w.build()?.n_objects())?;
        let mut samples = Vec::with_capacity(spec.samples as usize);
        for i in 0..spec.samples {
            let workload = w.build()?;
            let out = run_workload(spec.engine, &workload, spec.seed.wrapping_add(i as u64), stop, &cfg, Hooks::default())?;
            let m = out.metrics;
            let row = Row {
                engine: spec.engine,
                model: w.model,
                load: w.load,
                balance: w.balance,
                threads,
                sample: Some(i),
                committed_eps: m.committed_throughput(),
                total_eps: m.total_throughput(),
                rollbacks: m.rollbacks as f64,
                wall_s: m.wall_seconds,
                summary: None,
            };
            progress(&row);
            samples.push(row);
        }
        let summary = summarize(&samples);
        rows.append(&mut samples);
        if let Some(s) = summary {
            progress(&s);
            rows.push(s);
        }
    }
    Ok(rows)
}

pub fn run_sweep(spec: &SweepSpec, topology: &Topology) -> Result<Vec<Row>, BenchError> {
    run_sweep_with(spec, topology, |_| {})
}
