use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ibc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(format!("{name}.toml"))
        .display()
        .to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().expect("error line");
    serde_json::from_str(last).expect("last stderr line is JSON")
}

#[test]
fn simulate_writes_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace: PathBuf = dir.path().join("trace.csv");
    let out = ibc(&[
        "simulate",
        "--scenario",
        &scenario("uncongested"),
        "--controller",
        "lq",
        "--p2",
        "-3",
        "--trace",
        path_str(&trace),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = String::from_utf8(out.stdout).unwrap();
    let mut lines = report.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("scenario,controller,capacity_drop"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[1], "lq");
    assert_eq!(row[5], "-inf");
    let tts: f64 = row[7].parse().unwrap();
    let base: f64 = row[8].parse().unwrap();
    assert!(tts < base);

    let t = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(t.lines().count(), 1 + 361 * 6);
    assert!(t.lines().last().unwrap().starts_with("360,6,"));
}

#[test]
fn design_emits_readable_gain_file() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("k.txt");
    let out = ibc(&[
        "design",
        "--scenario",
        &scenario("uncongested"),
        "--p1",
        "-2.5",
        "--out",
        path_str(&gains),
    ]);
    assert!(out.status.success());
    let g = ibc_core::export::read_gains(std::io::BufReader::new(
        std::fs::File::open(&gains).unwrap(),
    ))
    .unwrap();
    assert_eq!(g.k.shape(), (6, 24));
    assert_eq!(g.meta.p1, -2.5);

    let lq = ibc(&[
        "design",
        "--scenario",
        &scenario("uncongested"),
        "--controller",
        "lq",
    ]);
    let g = ibc_core::export::read_gains(lq.stdout.as_slice()).unwrap();
    assert!(g.ki.iter().all(|v| *v == 0.0));
}

#[test]
fn sweep_is_reproducible_and_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = ibc(&[
            "sweep",
            "--scenario",
            &scenario("uncongested"),
            "--count",
            "6",
            "--seed",
            "9",
            "--out",
            path_str(p),
        ]);
        assert!(out.status.success());
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(ta).unwrap().lines().count(), 7);

    let none = dir.path().join("none.csv");
    assert!(ibc(&[
        "simulate",
        "--scenario",
        &scenario("uncongested"),
        "--controller",
        "none",
        "--out",
        path_str(&none)
    ])
    .status
    .success());
    let out = ibc(&["summarize", path_str(&none), "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",0"), "{text}");

    let out = ibc(&["summarize", path_str(&none), path_str(&a)]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("no-control"));
}

#[test]
fn failures_exit_nonzero_with_json_line() {
    let out = ibc(&["simulate", "--scenario", "/definitely/missing.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "io");
    assert_eq!(e["path"], "/definitely/missing.toml");

    let out = ibc(&[
        "sweep",
        "--scenario",
        &scenario("uncongested"),
        "--count",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "validation");
    assert_eq!(e["field"], "count");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "this is = = not toml").unwrap();
    let out = ibc(&["design", "--scenario", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "parse");

    let out = ibc(&[
        "simulate",
        "--scenario",
        &scenario("uncongested"),
        "--activation-step",
        "999",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "domain");

    let out = ibc(&[
        "design",
        "--scenario",
        &scenario("uncongested"),
        "--controller",
        "none",
    ]);
    assert_eq!(stderr_json(&out)["field"], "controller");

    let out = ibc(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = ibc(&["summarize", "/definitely/missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
}
