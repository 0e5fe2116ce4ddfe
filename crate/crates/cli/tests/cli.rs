use std::path::Path;
use std::process::{Command, Output};

fn lqropt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqropt")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const SCALAR: &str = r#"{"A": [[1.0]], "B": [[1.0]], "Q": [[1.0]], "R": [[1.0]], "K0": [[0.5]], "methods": ["qn", "ngd"]}"#;

#[test]
fn dare_on_scalar_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "scalar.json", SCALAR);
    let out = lqropt(&["dare", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("certificate: passed"), "{text}");
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    assert!(text.contains(&format!("{golden:.10}")[..8]), "{text}");
}

#[test]
fn run_writes_traces_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "scalar.json", SCALAR);
    let out_dir = dir.path().join("out");
    let out = lqropt(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["qn_trace.csv", "ngd_trace.csv", "summary.txt"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    assert!(!out_dir.join("gd_trace.csv").exists());
}

#[test]
fn invalid_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("asym.json", r#"{"A": [[0.5, 0], [0, 0.5]], "B": [[1], [0]], "Q": [[1, 2], [0, 1]], "R": [[1]]}"#, "`Q`"),
        ("broken.json", r#"{"A": [[0.5]"#, "ParseError"),
        ("method.json", r#"{"A": [[0.5]], "B": [[1]], "Q": [[1]], "R": [[1]], "methods": ["newton"]}"#, "`methods`"),
    ];
    for (name, text, needle) in cases {
        let cfg = write(dir.path(), name, text);
        let out = lqropt(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains(needle), "{name}: {err}");
    }
}

#[test]
fn unstable_seed_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "unstable.json", r#"{"A": [[2.0]], "B": [[1.0]], "Q": [[1.0]], "R": [[1.0]]}"#);
    assert_eq!(lqropt(&["dare", &cfg]).status.code(), Some(2));
    assert_eq!(lqropt(&["run", &cfg, "--out", dir.path().to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn prop_suite_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(lqropt(&["prop-suite", "--seed", "1", "--count", "0", "--out", out]).status.code(), Some(2));
    let run = lqropt(&["prop-suite", "--seed", "1", "--count", "2", "--out", out]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stdout));
    let csv = std::fs::read_to_string(dir.path().join("prop_suite.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
