use std::process::Command;

use pdes_bench::report::read_records;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdes-bench"))
}

fn fixture(name: &str) -> String {
    format!("{}/../core/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn sweep_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rows.csv");
    let status = bench()
        .args(["--engine", "conservative", "--model", "highway", "--threads", "1,2", "--samples", "2"])
        .args(["--events", "3000", "--scale", "0.02", "--topology-file", &fixture("cisc.json")])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let (_, rows) = read_records(&text).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[0] == "conservative" && r[1] == "highway" && r[8] == "0"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, "engine = \"optimistic\"\nmodel = \"pcs\"\nsamples = 3\nevents = 2000\nscale = 0.02\n").unwrap();
    let out = bench().arg("--config").arg(&cfg).args(["--engine", "seq", "--samples", "1"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_records(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "seq");
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| bench().args(args).output().unwrap().status.code();
    assert_eq!(code(&["--engine", "warp"]), Some(1));
    assert_eq!(code(&["--model", "ferry"]), Some(1));
    assert_eq!(code(&["--threads", "x"]), Some(1));
    assert_eq!(code(&["--no-such-flag"]), Some(1));
    assert_eq!(code(&["--balance", "unbalanced", "--model", "pcs"]), Some(1));
    assert_eq!(code(&["--samples", "0"]), Some(1));
    assert_eq!(code(&["--topology-file", "/nonexistent/topo.json"]), Some(3));
    let many = ["--engine", "optimistic", "--threads", "41", "--events", "100", "--scale", "0.02"];
    assert_eq!(code(&[&many[..], &["--topology-file", &fixture("cisc.json")]].concat()), Some(3));
    assert_eq!(code(&["--events", "100", "--scale", "0.02", "--out", "/nonexistent/dir/x.csv"]), Some(3));
    assert_eq!(code(&["--help"]), Some(0));
}

#[test]
fn verify_flag_reports_and_exits_zero() {
    let out = bench()
        .args(["--verify", "--model", "pcs", "--threads", "1,2", "--events", "4000", "--scale", "0.02"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("fingerprint") && !text.contains("FAIL"));
}
