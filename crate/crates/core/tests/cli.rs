use std::path::PathBuf;
use std::process::{Command, Output};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("testdata/golden")
        .join(name)
}

fn nwr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nwr"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_golden_with_version_order() {
    for name in ["a", "b", "c", "d"] {
        let h = golden(&format!("{name}.history"));
        let vo = golden(&format!("{name}.vo"));
        let o = nwr(&[
            "oracle",
            "check",
            path(&h),
            "--version-order",
            path(&vo),
            "--strict",
            "--recoverable",
        ]);
        assert!(o.status.success(), "{name}: {}", stdout(&o));
        assert!(stdout(&o).contains("mvsg: acyclic"));
    }
}

#[test]
fn check_rejects_cross() {
    let o = nwr(&["oracle", "check", path(&golden("cross.history"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("mvsr: fail"));
}

#[test]
fn dirty_read_is_not_recoverable() {
    let h = golden("dirty_read.history");
    let o = nwr(&["oracle", "check", path(&h), "--recoverable"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("recoverable: fail"));

    let o = nwr(&[
        "oracle",
        "verify",
        path(&h),
        path(&golden("dirty_read.vo")),
        path(&golden("dirty_read.serial")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("recoverable: fail"));
}

#[test]
fn nwr_rules_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h");
    let base = dir.path().join("base");
    let cand = dir.path().join("cand");
    std::fs::write(&h, "w 2 x\nw 1 x\nc 1\n").unwrap();
    std::fs::write(&base, "vo x 0 1\n").unwrap();
    std::fs::write(&cand, "vo x 0 2 1\n").unwrap();
    let o = nwr(&[
        "oracle",
        "nwr",
        path(&h),
        path(&base),
        path(&cand),
        "--txn",
        "2",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("ST-Rule: pass"));

    std::fs::write(&h, "w 1 x\nc 1\nr 3 x 1\nc 3\nw 2 x\n").unwrap();
    let o = nwr(&[
        "oracle",
        "nwr",
        path(&h),
        path(&base),
        path(&cand),
        "--txn",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("ST-Rule: fail"));
}

#[test]
fn malformed_history_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h");
    std::fs::write(&h, "q 1 x\n").unwrap();
    let o = nwr(&["oracle", "check", path(&h)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_run_writes_report_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let dump = dir.path().join("dump");
    let o = nwr(&[
        "bench",
        "run",
        "--protocol",
        "silo-nwr",
        "--threads",
        "2",
        "--theta",
        "0.9",
        "--epoch-ms",
        "10",
        "--workload",
        "ycsb-a",
        "--verify",
        "--txns",
        "200",
        "--records",
        "100",
        "--dump",
        path(&dump),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["protocol"], "silo-nwr");
    assert_eq!(report["verify"]["passed"], true);

    let o = nwr(&[
        "oracle",
        "verify",
        path(&dump.join("history.txt")),
        path(&dump.join("version_order.txt")),
        path(&dump.join("serial_order.txt")),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn bench_run_timed() {
    let o = nwr(&[
        "bench",
        "run",
        "--protocol",
        "silo",
        "--duration",
        "0.1",
        "--workload",
        "ycsb-b",
    ]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["committed"].as_u64().unwrap() > 0);
}

#[test]
fn unknown_workload_is_an_error() {
    let o = nwr(&["bench", "run", "--workload", "tpcc", "--duration", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let matrix = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/sweep.toml");
    let o = nwr(&[
        "bench",
        "sweep",
        "--matrix",
        path(&matrix),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "protocol",
            "threads",
            "theta",
            "epoch_ms",
            "throughput",
            "aborts",
            "commit_pct",
            "nwr_pct"
        ]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|row| row[4].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn empty_matrix_axis_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.toml");
    let out = dir.path().join("sweep.csv");
    std::fs::write(&matrix, "protocol = []\n").unwrap();
    let o = nwr(&[
        "bench",
        "sweep",
        "--matrix",
        path(&matrix),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);

    std::fs::write(&matrix, "protocol = \"silo\"\nbogus = 1\n").unwrap();
    let o = nwr(&[
        "bench",
        "sweep",
        "--matrix",
        path(&matrix),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
