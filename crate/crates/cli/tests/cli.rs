use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"
[scene]
k1 = { kind = "singleton" }
xhat = [9, 0, 0]
u = 1.0

[engine]
seed = 7
replicas = 300

[experiment]
distances = [9, 13]
"#;

fn interlace(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interlace"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr is one JSON object")
}

#[test]
fn lemmas_smoke() {
    let dir = setup();
    let o = interlace(
        &["--config", "run.toml", "--out", "o", "experiment", "lemmas"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("o/lemmas.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# interlace "));
    assert!(lines.next().unwrap().starts_with("xhat_norm,R,u,"));
    assert_eq!(lines.count(), 2);
    let json: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/lemmas.json")).unwrap())
            .unwrap();
    assert_eq!(json["header"]["command"], "experiment-lemmas");
    assert_eq!(json["header"]["seed"], 7);
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let dir = setup();
    for (threads, out) in [("1", "a"), ("8", "b")] {
        for cmd in [&["couple"][..], &["sample", "ri"], &["sample", "ns"]] {
            let mut args = vec!["--config", "run.toml", "--threads", threads, "--out", out];
            args.extend_from_slice(cmd);
            let o = interlace(&args, dir.path());
            assert_eq!(
                o.status.code(),
                Some(0),
                "{}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
    }
    for name in [
        "couple.csv",
        "couple.json",
        "sample_ri.csv",
        "sample_ns.csv",
    ] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs between thread counts");
    }
}

#[test]
fn json_format_writes_rows() {
    let dir = setup();
    let o = interlace(
        &[
            "--config",
            "run.toml",
            "--format",
            "json",
            "--out",
            "o",
            "potential",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(!dir.path().join("o/potential.csv").exists());
    let json: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/potential.json")).unwrap())
            .unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn overlapping_sets_are_rejected() {
    let dir = setup();
    fs::write(
        dir.path().join("bad.toml"),
        CONFIG.replace("xhat = [9, 0, 0]", "xhat = [0, 0, 0]"),
    )
    .unwrap();
    let o = interlace(
        &["--config", "bad.toml", "--out", "o", "potential"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "invalid_configuration");
    assert!(err["invariant"].is_string());
    assert!(!dir.path().join("o").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = setup();
    let o = interlace(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
    let o = interlace(&["--replicas", "0", "couple"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = interlace(&["--config", "missing.toml", "potential"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unwritable_output_exits_three() {
    let dir = setup();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let o = interlace(
        &["--config", "run.toml", "--out", "blocker/sub", "potential"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "io");
}
