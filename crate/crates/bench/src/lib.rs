//! Sweeps, verification and CSV reporting for the PDES engines.

pub mod config;
pub mod error;
pub mod report;
pub mod sweep;
pub mod verify;

pub use config::{EngineKind, FileConfig, PlacementChoice, SweepSpec};
pub use error::BenchError;
pub use sweep::{run_sweep, run_sweep_with, Hooks, Row, Summary};
pub use verify::{verify_mode, verify_with, VerifyReport};
