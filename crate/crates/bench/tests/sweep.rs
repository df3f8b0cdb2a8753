use pdes::models::{Balance, Load, ModelKind, WorkloadConfig};
use pdes::topology::Topology;
use pdes_bench::report::{read_records, write_csv, HEADER, SUMMARY_COLUMNS};
use pdes_bench::{run_sweep, verify_with, BenchError, EngineKind, Hooks, Row, SweepSpec};

fn small(engine: EngineKind, model: ModelKind, threads: Vec<usize>) -> SweepSpec {
    SweepSpec {
        engine,
        workload: WorkloadConfig::scaled(model, Load::Medium, Balance::Balanced, 0.02),
        threads,
        samples: 2,
        events: Some(5_000),
        ..SweepSpec::default()
    }
}

fn csv_text(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn two_samples_give_two_rows_and_a_summary() {
    let rows = run_sweep(&small(EngineKind::Seq, ModelKind::Pcs, vec![1]), &Topology::flat(1)).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r.sample).collect::<Vec<_>>(), [Some(0), Some(1), None]);
    let (header, records) = read_records(&csv_text(&rows)).unwrap();
    assert_eq!(header, HEADER);
    assert_eq!(records.len(), 3);
    assert_eq!(records[2][5], "summary");
    assert_eq!(records[2].len(), HEADER.len() + SUMMARY_COLUMNS.len());
    assert!(records[..2].iter().all(|r| r.len() == HEADER.len()));
}

#[test]
fn no_rows_is_header_only() {
    let text = csv_text(&[]);
    assert!(text.starts_with("# profile="));
    let (header, records) = read_records(&text).unwrap();
    assert_eq!(header, HEADER);
    assert!(records.is_empty());
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn single_sample_summary_has_zero_std() {
    let spec = SweepSpec { samples: 1, ..small(EngineKind::Conservative, ModelKind::Highway, vec![1]) };
    let rows = run_sweep(&spec, &Topology::flat(1)).unwrap();
    let s = rows[1].summary.unwrap();
    assert_eq!((s.committed_std, s.total_std), (0.0, 0.0));
    assert_eq!(s.committed_mean, rows[0].committed_eps);
}

#[test]
fn committed_never_exceeds_total() {
    let topo = Topology::risc_fixture();
    for model in [ModelKind::Pcs, ModelKind::Highway] {
        for (engine, threads) in [
            (EngineKind::Seq, vec![1]),
            (EngineKind::Conservative, vec![1, 3]),
            (EngineKind::Optimistic, vec![1, 3]),
        ] {
            for r in run_sweep(&small(engine, model, threads), &topo).unwrap() {
                assert!(r.committed_eps > 0.0);
                match engine {
                    EngineKind::Optimistic => assert!(r.committed_eps <= r.total_eps, "{r:?}"),
                    _ => assert_eq!(r.committed_eps, r.total_eps),
                }
                if engine == EngineKind::Conservative {
                    assert_eq!(r.rollbacks, 0.0);
                }
            }
        }
    }
}

/// Every column except the wall-time-derived ones.
fn stable_columns(rows: &[Row]) -> Vec<Vec<String>> {
    let (header, records) = read_records(&csv_text(rows)).unwrap();
    let skip: Vec<usize> = ["committed_eps", "total_eps", "wall_s"]
        .iter()
        .map(|c| header.iter().position(|h| h == c).unwrap())
        .collect();
    records
        .into_iter()
        .map(|r| r.into_iter().take(HEADER.len()).enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, v)| v).collect())
        .collect()
}

#[test]
fn budget_mode_is_repeatable() {
    let topo = Topology::risc_fixture();
    for (engine, threads) in
        [(EngineKind::Seq, vec![1]), (EngineKind::Conservative, vec![1, 2]), (EngineKind::Optimistic, vec![1])]
    {
        let spec = small(engine, ModelKind::Highway, threads);
        let a = stable_columns(&run_sweep(&spec, &topo).unwrap());
        let b = stable_columns(&run_sweep(&spec, &topo).unwrap());
        assert_eq!(a, b);
    }
}

#[test]
fn oversubscription_is_a_capacity_error() {
    let err = run_sweep(&small(EngineKind::Conservative, ModelKind::Pcs, vec![3]), &Topology::flat(2)).unwrap_err();
    assert!(matches!(err, BenchError::Topology(_)));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn verify_passes_on_both_models() {
    for model in [ModelKind::Pcs, ModelKind::Highway] {
        let spec = SweepSpec { events: Some(8_000), ..small(EngineKind::Seq, model, vec![1, 2, 4]) };
        let report = verify_with(&spec, &Topology::flat(1), Hooks::default()).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.oracle_events >= 8_000);
    }
}

#[test]
fn verify_names_the_first_diverging_key_under_corrupted_order() {
    let spec = SweepSpec {
        events: Some(8_000),
        ..small(EngineKind::Conservative, ModelKind::Highway, vec![1, 2])
    };
    let report = verify_with(&spec, &Topology::flat(1), Hooks { corrupt_order: true }).unwrap();
    assert!(!report.passed());
    let trace = report.failures().find(|c| c.name == "trace").unwrap_or_else(|| panic!("{report}"));
    assert!(trace.detail.contains("first divergence at position"), "{}", trace.detail);
    assert!(trace.detail.contains("expected (ts="), "{}", trace.detail);
}

#[test]
fn verify_reports_model_errors_under_corrupted_order() {
    let spec = SweepSpec { events: Some(8_000), ..small(EngineKind::Conservative, ModelKind::Pcs, vec![2]) };
    let report = verify_with(&spec, &Topology::flat(1), Hooks { corrupt_order: true }).unwrap();
    assert!(report.failures().any(|c| c.name == "run" || c.name == "trace"), "{report}");
}
