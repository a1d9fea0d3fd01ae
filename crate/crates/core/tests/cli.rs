use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use renet::renet::NetworkSnapshot;

fn renet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_renet")).args(args).output().unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = renet(&[
            "run", "--workload", "star_zipf", "--n", "64", "--m", "3000", "--c", "2", "--seed", "3", "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["ledger.csv", "windows.csv", "snapshot.json", "summary.json"] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs");
    }
    let summary: serde_json::Value = serde_json::from_slice(&read(&a, "summary.json")).unwrap();
    assert_eq!(summary["invariants_ok"], true);
    assert_eq!(summary["m"], 3000);
}

#[test]
fn validate_reports_clean_corrupt_and_missing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = renet(&["run", "--workload", "torus", "--n", "64", "--m", "2000", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let snap_path = dir.join("snapshot.json");
    assert_eq!(renet(&["validate", snap_path.to_str().unwrap()]).status.code(), Some(0));

    let mut snap: NetworkSnapshot = serde_json::from_slice(&read(dir, "snapshot.json")).unwrap();
    let (a, b, _) = snap.edges[0];
    snap.edges[0].2 += 1;
    let bad = dir.join("bad.json");
    fs::write(&bad, serde_json::to_vec(&snap).unwrap()).unwrap();
    let out = renet(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("link {a}-{b}")), "{stdout}");

    assert_eq!(renet(&["validate", dir.join("absent.json").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(renet(&[]).status.code(), Some(2));
    assert_eq!(renet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(renet(&["run", "--no-such-key", "1"]).status.code(), Some(2));
    assert_eq!(renet(&["compare", "--workload", "torus"]).status.code(), Some(2));
    assert_eq!(renet(&["run", "--workload", "torus", "--n", "10"]).status.code(), Some(2));
}

#[test]
fn external_trace_is_ingested() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("t.csv");
    fs::write(&trace, "#n=8\n0,1\n1,2\n2,0\n0,1\n3,7\n").unwrap();
    let out_dir = tmp.path().join("o");
    let out = renet(&["run", "--trace", trace.to_str().unwrap(), "--c", "1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ledger = String::from_utf8(read(&out_dir, "ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 6);
    let out = renet(&["run", "--trace", trace.to_str().unwrap(), "--n", "9", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_and_entropy_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = renet(&["compare", "--workload", "torus,star_zipf", "--n", "64,256", "--m-per-n", "20", "--out", dir]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(read(tmp.path(), "compare.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("torus,64,1280,"));
    assert!(rows[4].starts_with("star_zipf,256,5120,"));

    let out = renet(&["entropy", "--workload", "torus", "--n", "64", "--m", "5000", "--window", "1000", "--out", dir]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(read(tmp.path(), "entropy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}
