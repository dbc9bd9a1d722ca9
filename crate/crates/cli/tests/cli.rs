use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn svx(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_svx"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "svx {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_queries_build_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds.csv");
    let wl = dir.path().join("wl.csv");
    let idx = dir.path().join("augsfi");
    svx(&["gen", "--n", "400", "--d", "8", "--seed", "5", "-o", p(&ds)]);
    svx(&[
        "queries",
        "--dataset",
        p(&ds),
        "--group",
        "SD-VD",
        "--count",
        "5",
        "--seed",
        "5",
        "-o",
        p(&wl),
    ]);
    assert_eq!(fs::read_to_string(&wl).unwrap().lines().count(), 6);
    svx(&[
        "build",
        "--dataset",
        p(&ds),
        "--kind",
        "AugSFI",
        "-o",
        p(&idx),
        "--seed",
        "5",
    ]);
    let out = svx(&[
        "query",
        "--index",
        p(&idx),
        "--workload",
        p(&wl),
        "--qid",
        "2",
        "--dataset",
        p(&ds),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("result(s)"), "{text}");
    assert!(text.contains("pages: rtree"), "{text}");
    assert!(text.contains("recall"), "{text}");
}

#[test]
fn bench_with_config_file_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        "groups = [\"SU-VU\"]\nqueries_per_group = 4\ntiming_runs = 1\nseries = false\nseed = 7\n\n\
         [spec]\nn = 300\nd = 6\nseed = 7\ncoupling = 0.0\n\
         spatial_clusters = [{ center = [30.0, 30.0], weight = 0.5, spread = 3.0 }, { center = [70.0, 60.0], weight = 0.5, spread = 8.0 }]\n\
         visual_clusters = [{ center = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0], weight = 0.5, spread = 0.1 }, { center = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5], weight = 0.5, spread = 0.05 }]\n",
    )
    .unwrap();
    svx(&[
        "bench",
        "--config",
        p(&cfg),
        "--structures",
        "DI,AugSFI",
        "-o",
        p(&out),
    ]);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    // one row per query and variant: DI, AugSFI, AugSFI-E
    assert_eq!(report.lines().count(), 1 + 4 * 3);
    let printed = svx(&["report", p(&out.join("report.csv"))]);
    assert!(String::from_utf8(printed.stdout)
        .unwrap()
        .contains("AugSFI-E"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "tabels = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_svx"))
        .args(["bench", "--config", p(&cfg)])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("tabels"));
}
