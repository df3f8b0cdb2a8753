//! CSV output.

use std::io::Write;
use std::path::Path;

use crate::error::BenchError;
use crate::sweep::Row;

pub const HEADER: [&str; 10] =
    ["engine", "model", "load", "balance", "threads", "sample", "committed_eps", "total_eps", "rollbacks", "wall_s"];

/// Extra columns on summary rows.
pub const SUMMARY_COLUMNS: [&str; 4] = ["committed_mean", "committed_std", "total_mean", "total_std"];

pub fn profile_line() -> String {
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("# profile={profile} version={} cpus={cpus}", env!("CARGO_PKG_VERSION"))
}

fn record(row: &Row) -> Vec<String> {
    let mut r = vec![
        row.engine.to_string(),
        row.model.to_string(),
        row.load.to_string(),
        row.balance.to_string(),
        row.threads.to_string(),
        row.sample.map_or_else(|| "summary".to_string(), |s| s.to_string()),
        format!("{:.3}", row.committed_eps),
        format!("{:.3}", row.total_eps),
        row.rollbacks.to_string(),
        format!("{:.6}", row.wall_s),
    ];
    if let Some(s) = row.summary {
        r.extend([s.committed_mean, s.committed_std, s.total_mean, s.total_std].map(|v| format!("{v:.3}")));
    }
    r
}

pub fn write_csv<W: Write>(rows: &[Row], mut out: W) -> Result<(), csv::Error> {
    writeln!(out, "{}", profile_line())?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.write_record(record(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[Row], path: &Path) -> Result<(), BenchError> {
    let file = std::fs::File::create(path).map_err(|source| BenchError::Io { path: path.into(), source })?;
    write_csv(rows, std::io::BufWriter::new(file)).map_err(|source| BenchError::Csv { path: path.into(), source })
}

/// Reads CSV text back as string records, skipping the metadata line.
pub fn read_records(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), csv::Error> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
