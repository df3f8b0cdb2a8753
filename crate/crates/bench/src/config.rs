//! Sweep description, assembled from defaults, a TOML file and flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pdes::models::{Balance, Load, ModelKind, WorkloadConfig};
use pdes::topology::{PlacementPolicy, Topology};
use serde::Deserialize;

use crate::error::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Seq,
    Conservative,
    Optimistic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementChoice {
    /// Circular for the conservative engine, clustered otherwise.
    #[default]
    Auto,
    Clustered,
    Circular,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [EngineKind::Seq, EngineKind::Conservative, EngineKind::Optimistic];

    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Seq => "seq",
            EngineKind::Conservative => "conservative",
            EngineKind::Optimistic => "optimistic",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for EngineKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s.to_ascii_lowercase().as_str() {
            "seq" | "sequential" => Ok(EngineKind::Seq),
            "conservative" => Ok(EngineKind::Conservative),
            "optimistic" => Ok(EngineKind::Optimistic),
            other => Err(BenchError::Usage(format!("unknown engine '{other}'"))),
        }
    }
}

impl FromStr for PlacementChoice {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(PlacementChoice::Auto),
            "clustered" => Ok(PlacementChoice::Clustered),
            "circular" => Ok(PlacementChoice::Circular),
            other => Err(BenchError::Usage(format!("unknown placement '{other}'"))),
        }
    }
}

impl PlacementChoice {
    pub fn resolve(self, engine: EngineKind) -> PlacementPolicy {
        match (self, engine) {
            (PlacementChoice::Clustered, _) => PlacementPolicy::Clustered,
            (PlacementChoice::Circular, _) => PlacementPolicy::Circular,
            (PlacementChoice::Auto, EngineKind::Conservative) => PlacementPolicy::Circular,
            (PlacementChoice::Auto, _) => PlacementPolicy::Clustered,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub engine: EngineKind,
    pub workload: WorkloadConfig,
    pub threads: Vec<usize>,
    pub samples: u32,
    pub duration_s: f64,
    /// Committed-event budget per sample; replaces the wall-clock stop.
    pub events: Option<u64>,
    pub seed: u64,
    pub placement: PlacementChoice,
    pub topology_file: Option<PathBuf>,
    pub pin: bool,
    pub warmup_fraction: f64,
    pub out: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            engine: EngineKind::Seq,
            workload: WorkloadConfig::desk(ModelKind::Pcs, Load::Light, Balance::Balanced),
            threads: vec![1],
            samples: 20,
            duration_s: 60.0,
            events: None,
            seed: 42,
            placement: PlacementChoice::Auto,
            topology_file: None,
            pin: false,
            warmup_fraction: 0.05,
            out: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.samples == 0 {
            return Err(BenchError::Usage("samples must be at least 1".into()));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(BenchError::Usage(format!("duration {} must be positive", self.duration_s)));
        }
        if self.events == Some(0) {
            return Err(BenchError::Usage("event budget must be positive".into()));
        }
        if self.threads.is_empty() || self.threads.contains(&0) {
            return Err(BenchError::Usage("thread counts must be positive".into()));
        }
        if self.engine == EngineKind::Seq && self.threads.iter().any(|&t| t != 1) {
            return Err(BenchError::Usage("the sequential engine runs on one thread".into()));
        }
        if !(0.0..0.9).contains(&self.warmup_fraction) {
            return Err(BenchError::Usage(format!("warm-up fraction {} out of range", self.warmup_fraction)));
        }
        self.workload.validate()?;
        Ok(())
    }

    pub fn topology(&self) -> Result<Topology, BenchError> {
        match &self.topology_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| BenchError::Io { path: path.clone(), source })?;
                Ok(Topology::from_json(&text)?)
            }
            None => Ok(Topology::discover()),
        }
    }
}

/// Every key is optional; present keys override the defaults.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub engine: Option<EngineKind>,
    pub model: Option<ModelKind>,
    pub load: Option<Load>,
    pub balance: Option<Balance>,
    pub scale: Option<f64>,
    pub cells: Option<usize>,
    pub channels: Option<u32>,
    pub zones: Option<usize>,
    pub threads: Option<Vec<usize>>,
    pub samples: Option<u32>,
    pub duration_s: Option<f64>,
    pub events: Option<u64>,
    pub seed: Option<u64>,
    pub placement: Option<PlacementChoice>,
    pub topology_file: Option<PathBuf>,
    pub pin: Option<bool>,
    pub warmup_fraction: Option<f64>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Usage(format!("config file: {e}")))
    }

    /// Layers `other` on top: its present keys win.
    pub fn overlay(self, other: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),+) => { FileConfig { $($f: other.$f.or(self.$f)),+ } };
        }
        pick!(
            engine, model, load, balance, scale, cells, channels, zones, threads, samples, duration_s, events, seed,
            placement, topology_file, pin, warmup_fraction, out
        )
    }

    pub fn apply(self, spec: &mut SweepSpec) {
        let w = &mut spec.workload;
        if let Some(m) = self.model {
            w.model = m;
        }
        if let Some(l) = self.load {
            w.load = l;
        }
        if let Some(b) = self.balance {
            w.balance = b;
        }
        if let Some(s) = self.scale {
            // An explicit scale replaces the desk-size overrides.
            *w = WorkloadConfig::scaled(w.model, w.load, w.balance, s);
        }
        w.cells = self.cells.or(w.cells);
        w.channels = self.channels.or(w.channels);
        w.zones = self.zones.or(w.zones);
        macro_rules! set {
            ($($f:ident),+) => { $(if let Some(v) = self.$f { spec.$f = v; })+ };
        }
        set!(engine, threads, samples, duration_s, seed, placement, pin, warmup_fraction);
        spec.events = self.events.or(spec.events);
        spec.topology_file = self.topology_file.or(spec.topology_file.take());
        spec.out = self.out.or(spec.out.take());
    }
}
