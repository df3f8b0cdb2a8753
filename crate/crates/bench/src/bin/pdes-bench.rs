use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pdes_bench::report::{write_csv, write_csv_file};
use pdes_bench::{run_sweep_with, verify_mode, BenchError, FileConfig, SweepSpec};

/// Runs PDES benchmark sweeps and writes one CSV row per sample.
#[derive(Debug, Parser)]
#[command(name = "pdes-bench", version)]
struct Cli {
    /// TOML file with any of the flag names as keys; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// seq, conservative or optimistic
    #[arg(long)]
    engine: Option<String>,
    /// pcs or highway
    #[arg(long)]
    model: Option<String>,
    /// light, medium or heavy
    #[arg(long)]
    load: Option<String>,
    /// balanced or unbalanced (highway only)
    #[arg(long)]
    balance: Option<String>,
    /// Comma-separated thread counts, e.g. 1,2,4,8
    #[arg(long, value_delimiter = ',')]
    threads: Option<Vec<usize>>,
    #[arg(long)]
    samples: Option<u32>,
    /// Wall-clock seconds per sample.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Committed-event budget per sample; replaces the wall-clock stop.
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// auto, clustered or circular
    #[arg(long)]
    placement: Option<String>,
    /// Model size relative to the full configuration, in (0, 1].
    #[arg(long)]
    scale: Option<f64>,
    /// JSON topology description instead of the discovered one.
    #[arg(long)]
    topology_file: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leading share of each timed sample excluded from throughput.
    #[arg(long)]
    warmup_fraction: Option<f64>,
    /// Bind worker threads to their placement CPUs.
    #[arg(long)]
    pin: bool,
    /// Check the parallel engines against the sequential one instead of timing.
    #[arg(long)]
    verify: bool,
}

fn parse<T: std::str::FromStr>(v: Option<String>, what: &str) -> Result<Option<T>, BenchError> {
    v.map(|s| s.parse().map_err(|_| BenchError::Usage(format!("unknown {what} '{s}'")))).transpose()
}

impl Cli {
    fn flags(self) -> Result<FileConfig, BenchError> {
        Ok(FileConfig {
            engine: parse(self.engine, "engine")?,
            model: parse(self.model, "model")?,
            load: parse(self.load, "load")?,
            balance: parse(self.balance, "balance")?,
            scale: self.scale,
            threads: self.threads,
            samples: self.samples,
            duration_s: self.duration_s,
            events: self.events,
            seed: self.seed,
            placement: parse(self.placement, "placement")?,
            topology_file: self.topology_file,
            pin: self.pin.then_some(true),
            warmup_fraction: self.warmup_fraction,
            out: self.out,
            ..Default::default()
        })
    }
}

fn run(cli: Cli) -> Result<bool, BenchError> {
    let verify = cli.verify;
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut spec = SweepSpec::default();
    file.overlay(cli.flags()?).apply(&mut spec);
    let topology = spec.topology()?;

    if verify {
        let report = verify_mode(&spec, &topology)?;
        print!("{report}");
        return Ok(report.passed());
    }

    spec.validate()?;
    let rows = run_sweep_with(&spec, &topology, |r| {
        if let Some(s) = r.sample {
            eprintln!("{} threads={} sample={s} committed_eps={:.0}", r.engine, r.threads, r.committed_eps);
        }
    })?;
    match &spec.out {
        Some(path) => write_csv_file(&rows, path)?,
        None => {
            let stdout = std::io::stdout();
            write_csv(&rows, stdout.lock()).map_err(|source| BenchError::Csv { path: "<stdout>".into(), source })?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
