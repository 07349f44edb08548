use std::fs;
use std::path::Path;
use std::process::Command;

use lift_watchdog::{sample_random_joint, JointDistribution};
use lift_watchdog_cli::{run, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_IO, EXIT_OK};
use serde_json::Value;

const J3: &str = "0.25,0.15,0.10\n0.05,0.15,0.30\n";

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("lift-watchdog").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn sanitize_golden_case() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "j3.csv", J3);
    let out = dir.path().join("channel.json");
    let (code, stdout, _) = call(&[
        "sanitize",
        "--input",
        &input,
        "--epsilon",
        "0.5",
        "--method",
        "greedy",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("blocks: [{x1, x3}]"));

    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["blocks"], serde_json::json!([[0, 2]]));
    let nmil = doc["metrics"]["nmil"].as_f64().unwrap();
    assert!((nmil - 0.43902).abs() <= 1e-4);
    assert_eq!(doc["metrics"]["feasible"], true);
    assert!(doc.get("trace").is_none());
}

#[test]
fn printed_numbers_are_recomputable_from_channel_json() {
    let dir = tempfile::tempdir().unwrap();
    let j = sample_random_joint(4, 9, 17).unwrap();
    let input = write(dir.path(), "j.json", &j.to_json_string());
    let out = dir.path().join("channel.json");
    let (code, _, _) = call(&[
        "sanitize",
        "--input",
        &input,
        "--epsilon",
        "0.4",
        "--trace",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(code == EXIT_OK || code == EXIT_INFEASIBLE);
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(doc["trace"]["merge_log"].as_array().is_some());

    let transition: Vec<Vec<f64>> = serde_json::from_value(doc["transition"].clone()).unwrap();
    let ny = transition[0].len();
    let px = j.px();
    let py: Vec<f64> = (0..ny)
        .map(|y| (0..px.len()).map(|x| px[x] * transition[x][y]).sum())
        .collect();
    let mut mi = 0.0;
    for x in 0..px.len() {
        for y in 0..ny {
            let t = transition[x][y];
            if t > 0.0 {
                mi += px[x] * t * (t / py[y]).ln();
            }
        }
    }
    let reported = doc["metrics"]["mutual_information"].as_f64().unwrap();
    assert!((mi - reported).abs() <= 1e-10);

    let mut leak: f64 = 0.0;
    for y in 0..ny {
        for s in 0..j.num_secrets() {
            let joint: f64 = (0..px.len()).map(|x| j.mass(s, x) * transition[x][y]).sum();
            leak = leak.max((joint / j.ps()[s] / py[y]).ln().abs());
        }
    }
    let reported = doc["metrics"]["post_leakage"].as_f64().unwrap();
    assert!((leak - reported).abs() <= 1e-10);
}

#[test]
fn infeasible_sanitization_still_writes_channel() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "j3.csv", J3);
    let out = dir.path().join("channel.json");
    let (code, _, stderr) = call(&[
        "sanitize",
        "--input",
        &input,
        "--epsilon",
        "0.8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_INFEASIBLE);
    assert!(stderr.contains("warning"));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["metrics"]["feasible"], false);
}

#[test]
fn complete_method_and_strict_fixup_flag() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "j4.csv",
        "0.20,0.15,0.10,0.05\n0.05,0.10,0.20,0.15\n",
    );
    let out = dir.path().join("c.json");
    let path = out.to_str().unwrap();
    let (code, _, _) = call(&[
        "sanitize",
        "--input",
        &input,
        "--epsilon",
        "0.1",
        "--method",
        "complete",
        "--out",
        path,
    ]);
    assert_eq!(code, EXIT_OK);
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["blocks"], serde_json::json!([[0, 1, 2, 3]]));

    let (code, _, _) = call(&[
        "sanitize",
        "--input",
        &input,
        "--epsilon",
        "0.1",
        "--fixup-exclude-first",
        "--out",
        path,
    ]);
    assert_eq!(code, EXIT_INFEASIBLE);
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["blocks"], serde_json::json!([[0, 2], [1, 3]]));
}

#[test]
fn analyze_with_infinite_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "j3.csv", J3);
    let (code, stdout, _) = call(&["analyze", "--input", &input, "--epsilon", "inf"]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("high-risk set: {}"));
}

#[test]
fn oracle_rejects_large_high_risk_set() {
    let dir = tempfile::tempdir().unwrap();
    let j = sample_random_joint(2, 13, 5).unwrap();
    let input = write(dir.path(), "big.json", &j.to_json_string());
    let (code, _, stderr) = call(&["oracle", "--input", &input, "--epsilon", "0"]);
    assert_eq!(code, EXIT_INVALID);
    assert!(stderr.contains("high-risk set too large for oracle"));
}

#[test]
fn oracle_reports_gap() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "j3.csv", J3);
    let (code, stdout, _) = call(&["oracle", "--input", &input, "--epsilon", "0.5"]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("optimality gap: 0.00000000000"));
}

#[test]
fn invalid_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "j3.csv", J3);
    let dead = write(dir.path(), "dead.csv", "0.5,0.0\n0.5,0.0\n");
    let cases: Vec<Vec<&str>> = vec![
        vec!["analyze", "--input", &input, "--epsilon", "-1"],
        vec!["analyze", "--input", &input, "--epsilon", "abc"],
        vec![
            "analyze",
            "--input",
            &input,
            "--epsilon",
            "0.5",
            "--log-base",
            "2",
        ],
        vec!["analyze", "--input", &dead, "--epsilon", "0.5"],
        vec![
            "sanitize",
            "--input",
            &input,
            "--epsilon",
            "0.5",
            "--method",
            "best",
            "--out",
            "x",
        ],
        vec!["sweep", "--epsilons", "1,0.5", "--out", "x.csv"],
        vec!["sweep", "--trials", "0", "--out", "x.csv"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let (code, _, _) = call(&args);
        assert_eq!(code, EXIT_INVALID, "{args:?}");
    }
}

#[test]
fn io_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "j3.csv", J3);
    let missing = dir.path().join("missing.csv");
    let (code, _, _) = call(&[
        "analyze",
        "--input",
        missing.to_str().unwrap(),
        "--epsilon",
        "1",
    ]);
    assert_eq!(code, EXIT_IO);
    let bad_out = dir.path().join("no/such/dir/out.json");
    let (code, _, _) = call(&[
        "sanitize",
        "--input",
        &input,
        "--epsilon",
        "0.5",
        "--out",
        bad_out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_IO);
}

#[test]
fn json_and_csv_inputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "j3.csv", J3);
    let j = JointDistribution::load(Path::new(&csv)).unwrap();
    let json = write(dir.path(), "j3.json", &j.to_json_string());
    let (_, a, _) = call(&["analyze", "--input", &csv, "--epsilon", "0.5"]);
    let (_, b, _) = call(&["analyze", "--input", &json, "--epsilon", "0.5"]);
    assert_eq!(a, b);
}

#[test]
fn sweep_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let json = dir.path().join("s.json");
    let (code, stdout, _) = call(&[
        "sweep",
        "--trials",
        "5",
        "--secrets",
        "3",
        "--symbols",
        "6",
        "--epsilons",
        "0.5,1",
        "--seed",
        "9",
        "--out",
        csv.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("greedy"));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("epsilon,method,mean_hr_leakage"));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["per_epsilon"].as_array().unwrap().len(), 4);
    assert_eq!(doc["config"]["seed"], 9);
}

#[test]
fn sweep_thread_cap_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_lift-watchdog");
    let args = |out: &Path| {
        vec![
            "sweep".to_owned(),
            "--trials".into(),
            "6".into(),
            "--secrets".into(),
            "3".into(),
            "--symbols".into(),
            "5".into(),
            "--epsilons".into(),
            "0.5,1.5".into(),
            "--out".into(),
            out.to_str().unwrap().to_owned(),
        ]
    };
    let one = dir.path().join("one.csv");
    let all = dir.path().join("all.csv");
    let status = Command::new(bin)
        .args(args(&one))
        .env("LIFT_WATCHDOG_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    let status = Command::new(bin)
        .args(args(&all))
        .env("LIFT_WATCHDOG_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    assert_eq!(fs::read(&one).unwrap(), fs::read(&all).unwrap());

    let status = Command::new(bin)
        .args(args(&all))
        .env("LIFT_WATCHDOG_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_INVALID));
}
