//! End-to-end runs of the fietlab binary: worked examples, output plumbing,
//! determinism, config-file override, and the exit-code contract.

use std::fs;
use std::io::Write as _;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fietlab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

/// Payload rows with the leading `#` annotation lines stripped.
fn data_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(str::to_string)
        .collect()
}

#[test]
fn induce_trace_reports_each_step_and_the_verdict() {
    let out = run(&[
        "induce",
        "--perm",
        "-2 1",
        "--lengths",
        "3/10 7/10",
        "--steps",
        "5",
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.starts_with("# version "), "{text}");
    assert!(text.contains("\n# seed 0\n"), "{text}");
    let rows = data_lines(&text);
    assert_eq!(rows[0], "step,case,run,winner,loser,perm,total");
    assert_eq!(rows[1], "1,B,1,1,0,-2 1,7/10");
    assert_eq!(rows[2], "2,B,1,1,0,-2 1,2/5");
    // The flipped 2-interval class has no case-A arrow here: the successor
    // is reducible, so the honest verdict is a hole after two steps.
    assert_eq!(rows[3], "verdict,Hole,2,,,-1 -2,2/5");
    assert_eq!(rows.len(), 4);
}

#[test]
fn construct_pipes_into_induce() {
    let make = run(&["construct", "--rotation", "golden", "--glue"]);
    assert!(make.status.success(), "{make:?}");
    let record = stdout(&make);
    let parsed: serde_json::Value = serde_json::from_str(&record).expect("json payload");
    assert_eq!(parsed["backend"], "quad:5");
    assert!(parsed["version"].is_string());

    let mut child = bin()
        .args(["induce", "--steps", "10000"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child
        .stdin
        .take()
        .expect("stdin")
        .write_all(record.as_bytes())
        .expect("pipe record");
    let out = child.wait_with_output().expect("binary finishes");
    assert!(out.status.success(), "{out:?}");
    // The glued golden map ties immediately: the appended interval copies
    // the length of the glued symbol, so the first comparison is equal.
    let rows = data_lines(&stdout(&out));
    assert_eq!(rows.len(), 2, "{rows:?}");
    assert!(rows[1].starts_with("verdict,Tie,0"), "{rows:?}");
}

#[test]
fn survival_accepts_depth_ranges_and_decays_monotonically() {
    let out = run(&[
        "survival",
        "--perm",
        "-4 -3 -2 -1",
        "--depths",
        "0..6",
        "--samples",
        "2000",
        "--seed",
        "42",
    ]);
    assert!(out.status.success(), "{out:?}");
    let rows = data_lines(&stdout(&out));
    assert_eq!(rows.len(), 1 + 7, "{rows:?}");
    let estimates: Vec<f64> = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert_eq!(estimates[0], 1.0);
    for pair in estimates.windows(2) {
        assert!(pair[1] <= pair[0], "{estimates:?}");
    }
}

#[test]
fn identical_configs_give_byte_identical_outputs_and_a_run_record() {
    let dir = tempfile::tempdir().expect("tempdir");
    let args = |name: &str| {
        let out = dir.path().join(name);
        vec![
            "kerckhoff".to_string(),
            "--perm".to_string(),
            "-2 1".to_string(),
            "--weights".to_string(),
            "1 2".to_string(),
            "--ts".to_string(),
            "2 4".to_string(),
            "--samples".to_string(),
            "2000".to_string(),
            "--seed".to_string(),
            "7".to_string(),
            "--out".to_string(),
            out.display().to_string(),
        ]
    };
    let a = bin().args(args("a.csv")).output().expect("binary runs");
    let b = bin().args(args("b.csv")).output().expect("binary runs");
    assert!(a.status.success() && b.status.success());
    let left = fs::read(dir.path().join("a.csv")).expect("first table");
    let right = fs::read(dir.path().join("b.csv")).expect("second table");
    assert_eq!(left, right);

    let text = String::from_utf8(left).expect("utf8 table");
    assert!(text.starts_with("# version "), "{text}");
    assert!(text.contains("\n# seed 7\n"), "{text}");

    let record: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("a.run.json")).expect("run record"),
    )
    .expect("record json");
    assert_eq!(record["seed"], 7);
    assert_eq!(record["config"]["subcommand"], "kerckhoff");
    assert_eq!(record["config"]["options"]["samples"], "2000");
    assert!(record["version"].is_string());
    assert!(record["report"]["rows"].is_array());
    assert_eq!(record["outputs"][0], dir.path().join("a.csv").display().to_string());
}

#[test]
fn config_file_entries_override_flags() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# induction budget\nsteps = 1\n").expect("write config");
    let out = run(&[
        "induce",
        "--perm",
        "-2 1",
        "--lengths",
        "3/10 7/10",
        "--steps",
        "5",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let rows = data_lines(&stdout(&out));
    assert_eq!(rows.len(), 3, "{rows:?}");
    assert!(rows[2].starts_with("verdict,SurvivedBudget,1"), "{rows:?}");
}

#[test]
fn bad_input_exits_2_and_exhausted_precision_exits_3() {
    let bad = run(&["induce", "--perm", "0 1 2", "--lengths", "1/2 1/2"]);
    assert_eq!(bad.status.code(), Some(2), "{bad:?}");
    assert!(!String::from_utf8_lossy(&bad.stderr).is_empty());

    let unknown = run(&["induce", "--perm", "-2 1", "--lengths", "1/2 1/2", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2), "{unknown:?}");

    // Equal float lengths cannot be ordered at any finite precision, so the
    // first comparison is undecidable rather than a tie.
    let undecidable = run(&[
        "induce",
        "--perm",
        "-2 1",
        "--lengths",
        "0.25 0.25",
        "--backend",
        "float:24",
        "--steps",
        "3",
    ]);
    assert_eq!(undecidable.status.code(), Some(3), "{undecidable:?}");
}

#[test]
fn graph_emits_adjacency_json_and_edge_csv() {
    let json = run(&["graph", "--perm", "-2 1", "--format", "json"]);
    assert!(json.status.success(), "{json:?}");
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&json)).expect("graph json");
    assert!(parsed["vertices"].as_array().map_or(false, |v| !v.is_empty()));
    assert!(parsed["version"].is_string());
    assert_eq!(parsed["closed"], true);

    let csv = run(&["graph", "--perm", "-2 1", "--format", "csv"]);
    assert!(csv.status.success(), "{csv:?}");
    let rows = data_lines(&stdout(&csv));
    assert_eq!(rows[0], "from,case,to");
    assert!(rows[1..].iter().any(|r| r.ends_with(",hole")), "{rows:?}");
}

#[test]
fn orbit_walks_and_detects_periodicity() {
    let out = run(&[
        "orbit",
        "--perm",
        "2 1",
        "--lengths",
        "13/31 18/31",
        "--start",
        "1/7",
        "--steps",
        "50",
        "--detect",
    ]);
    assert!(out.status.success(), "{out:?}");
    let rows = data_lines(&stdout(&out));
    assert_eq!(rows[0], "index,point,cell");
    assert!(rows.len() > 2, "{rows:?}");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("periodic orbit"), "{err}");
}

#[test]
fn section_experiments_accept_explicit_case_words() {
    let tails = run(&[
        "tails",
        "--perm",
        "3 2 1",
        "--section",
        "ABABAB",
        "--ts",
        "2 4",
        "--samples",
        "300",
        "--seed",
        "5",
    ]);
    assert!(tails.status.success(), "{tails:?}");
    let rows = data_lines(&stdout(&tails));
    assert_eq!(rows.len(), 1 + 2, "{rows:?}");

    let expansion = run(&[
        "expansion",
        "--perm",
        "3 2 1",
        "--path",
        "ABABAB",
        "--pairs",
        "20",
        "--seed",
        "1",
    ]);
    assert!(expansion.status.success(), "{expansion:?}");

    let walk_off_class = run(&["expansion", "--perm", "-2 1", "--path", "AA", "--pairs", "5"]);
    assert_eq!(walk_off_class.status.code(), Some(2), "{walk_off_class:?}");
}
