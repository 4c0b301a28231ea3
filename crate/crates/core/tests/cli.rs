use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polyvsi::bench::{parse_grid, BENCHMARK_GRID, CURRENT_HEADER, POWER_FLOW_HEADER, TRACE_HEADER, VSI_HEADER};

fn polyvsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyvsi")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn emit(dir: &Path) -> PathBuf {
    let grid = dir.join("benchmark.grid");
    let o = polyvsi(&["bench", "emit", grid.to_str().unwrap()]);
    assert!(o.status.success());
    grid
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn emitted_benchmark_matches_bundled_text() {
    let dir = tempfile::tempdir().unwrap();
    let grid = emit(dir.path());
    assert_eq!(std::fs::read_to_string(&grid).unwrap(), BENCHMARK_GRID);
    parse_grid(&grid).unwrap().to_models().unwrap();
}

#[test]
fn validate_reports_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let grid = emit(dir.path());
    let o = polyvsi(&["validate", s(&grid)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("25 nodes, 24 branches, 1 slack(s), 8 resource(s)"), "{out}");
    assert!(out.trim_end().ends_with("ok"));
}

#[test]
fn power_flow_writes_voltages_and_currents() {
    let dir = tempfile::tempdir().unwrap();
    let grid = emit(dir.path());
    let (v, i) = (dir.path().join("v.csv"), dir.path().join("i.csv"));
    let o = polyvsi(&["pf", s(&grid), "--xi", "1.5", "--out", s(&v), "--currents", s(&i)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("converged at xi = 1.5"));
    assert_eq!(header(&v), POWER_FLOW_HEADER.join(","));
    assert_eq!(header(&i), CURRENT_HEADER.join(","));
    assert_eq!(std::fs::read_to_string(&v).unwrap().lines().count(), 1 + 25 * 3);
    assert_eq!(std::fs::read_to_string(&i).unwrap().lines().count(), 1 + 24 * 3);
}

#[test]
fn power_flow_beyond_the_limit_fails() {
    let dir = tempfile::tempdir().unwrap();
    let grid = emit(dir.path());
    let o = polyvsi(&["pf", s(&grid), "--xi", "2.5"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn continuation_then_index_on_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let grid = emit(dir.path());
    let (trace, snap, report) = (dir.path().join("t.csv"), dir.path().join("s.csv"), dir.path().join("l.csv"));
    let o = polyvsi(&["cpf", s(&grid), "--out", s(&trace), "--snapshot", s(&snap)]);
    assert!(o.status.success());
    let out = stdout(&o);
    let xi_max: f64 = out.lines().find_map(|l| l.strip_prefix("xi_max = ")).unwrap().trim().parse().unwrap();
    assert!(out.contains("at node 25 phase A"), "{out}");
    assert_eq!(header(&trace), TRACE_HEADER.join(","));

    let xi = format!("{xi_max}");
    let o = polyvsi(&["vsi", s(&grid), "--voltages", s(&snap), "--xi", &xi, "--out", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("at node 25 phase A"));
    assert_eq!(header(&report), VSI_HEADER.join(","));
    let critical: Vec<String> =
        std::fs::read_to_string(&report).unwrap().lines().filter(|l| l.ends_with(",1")).map(String::from).collect();
    assert_eq!(critical.len(), 1);
    assert!(critical[0].starts_with("25,A,"));
}

#[test]
fn missing_grid_file_fails() {
    let o = polyvsi(&["cpf", "/nonexistent/grid.txt"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}

#[test]
fn malformed_grid_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("bad.grid");
    std::fs::write(&grid, "[grid]\nphases = three\n").unwrap();
    let o = polyvsi(&["validate", s(&grid)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}
