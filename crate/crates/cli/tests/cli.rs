use std::path::PathBuf;
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adn-agent"))
        .arg("--data")
        .arg(data_dir())
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ask_prints_the_answer() {
    let o = run(&["ask", "What is the peak voltage of the Valley District on October 12, 2024?"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("peak voltage = 1.011 p.u."), "{out}");
    assert!(out.contains("status: completed"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["pf"]).status.code(), Some(1));
    assert_eq!(run(&["opt", "--district", "valley", "--objective", "cheapest"]).status.code(), Some(1));
    assert_eq!(run(&["bench", "score", "x.json", "--format", "xml"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_two() {
    assert_eq!(run(&["pf", "--case", "/nonexistent/case.m"]).status.code(), Some(2));
    assert_eq!(run(&["pf", "--district", "atlantis"]).status.code(), Some(2));
    assert_eq!(run(&["--config", "/nonexistent.toml", "ask", "hello"]).status.code(), Some(2));
    assert_eq!(run(&["--backend", "nobody", "ask", "hello"]).status.code(), Some(2));
}

#[test]
fn unanswerable_request_exits_three() {
    let o = run(&["ask", "Please write me a poem about transformers."]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("status: incomplete"));
}

#[test]
fn power_flow_and_dispatch_report_results() {
    let case = data_dir().join("cases/valley33.m");
    let o = run(&["pf", "--case", case.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("step  0: |V| 0.9131-1.0000 p.u."), "{}", stdout(&o));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("opt.json");
    let o = run(&[
        "--out",
        out.to_str().unwrap(),
        "opt",
        "--district",
        "valley",
        "--date",
        "2024-10-12",
        "--hour",
        "12",
        "--objective",
        "min_power_loss",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("min_power_loss:"));
    let payload: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(payload["strategy"]["feasible"], true);
}

#[test]
fn case_adjust_writes_a_parseable_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adjusted.m");
    let case = data_dir().join("cases/valley33.m");
    let o = run(&[
        "--out",
        out.to_str().unwrap(),
        "case",
        "adjust",
        case.to_str().unwrap(),
        "open branch 9-10",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let adjusted = adn_grid::parse_case(&std::fs::read_to_string(out).unwrap()).unwrap();
    let original = adn_grid::parse_case(&std::fs::read_to_string(case).unwrap()).unwrap();
    assert_eq!(adjusted.in_service_branch_count() + 1, original.in_service_branch_count());

    let o = run(&["case", "adjust", data_dir().join("cases/valley33.m").to_str().unwrap(), "paint bus 3 red"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_run_writes_runs_logs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.json");
    let cases: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(data_dir().join("bench/benchmark.json")).unwrap()).unwrap();
    std::fs::write(&suite, serde_json::to_string(&cases[..3]).unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "1,2",
        "bench",
        "run",
        "--suite",
        suite.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("runs: 6"));
    for f in ["runs.json", "report.txt", "report.json", "report.md"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_dir(out.join("logs")).unwrap().count(), 6);

    let o = run(&[
        "bench",
        "score",
        out.join("runs.json").to_str().unwrap(),
        "--suite",
        suite.to_str().unwrap(),
        "--format",
        "md",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("| ADN-Agent | 100.0% | 100.0% | 100.0% |"));
}

#[test]
fn scoring_an_empty_run_set_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.json");
    std::fs::write(&runs, r#"{"backends":[],"seeds":[],"runs":[]}"#).unwrap();
    let o = run(&["bench", "score", runs.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("completion rate: n/a"));
}

#[test]
fn pairs_flow_from_generation_to_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let o = run(&["--out", &p("pairs.json"), "pairs", "gen", "--count", "6", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("generated 24 pairs"));
    let o = run(&["--out", &p("verified.json"), "pairs", "verify", &p("pairs.json")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("24 of 24 pairs passed"));
    let o = run(&["--out", &p("dataset"), "pairs", "emit", &p("verified.json")]);
    assert_eq!(o.status.code(), Some(0));
    let lines = std::fs::read_to_string(dir.path().join("dataset/dataset.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 24);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("dataset/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["trainer"]["samples"], 24);

    // Emitting unverified pairs is refused.
    let o = run(&["--out", &p("dataset2"), "pairs", "emit", &p("pairs.json")]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["pairs", "inspect", &p("verified.json"), "--k", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("## Pair ").count(), 3);
}
