//! Exit codes, artifact metadata and the report table, through the binary.

use std::path::Path;
use std::process::{Command, Output};

fn amiguard(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amiguard"))
        .args(["--workdir", workdir.to_str().unwrap(), "--rate", "per30min", "--paillier-bits", "512"])
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(workdir: &Path, args: &[&str]) -> serde_json::Value {
    let out = amiguard(workdir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&amiguard(dir.path(), &["--threshold", "150", "synth"])), 2);
    assert_eq!(code(&amiguard(dir.path(), &["--paillier-bits", "100", "synth"])), 2);

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"threshold_percent": 10, "no_such_field": 1}"#).unwrap();
    assert_eq!(code(&amiguard(dir.path(), &["--config", cfg.to_str().unwrap(), "synth"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("in.csv");
    std::fs::write(&csv, "consumer_id,timestamp_iso8601,kwh\nh1,2016-05-01T00:00:00,0.1\nh1,2016-05-01T00:01:00,-0.2\n").unwrap();
    let out = amiguard(dir.path(), &["ingest", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("in.csv:3:"), "error should name the line");

    // prep without traces
    assert_eq!(code(&amiguard(dir.path(), &["prep"])), 3);
}

#[test]
fn eval_on_an_empty_test_split_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // two days per consumer round to zero test days
    let common = ["--consumers", "3", "--days", "2", "--epochs", "1"];
    for step in [&["synth"][..], &["prep"], &["train", "--target", "attacker"]] {
        ok(dir.path(), &[&common[..], step].concat());
    }
    let out = amiguard(dir.path(), &[&common[..], &["--defense", "false", "eval"]].concat());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("test split is empty"));
}

#[test]
fn pipeline_fills_the_report_and_embeds_config() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--consumers", "6", "--days", "10", "--epochs", "2", "--seed", "7"];
    let run = |step: &[&str]| ok(dir.path(), &[&common[..], step].concat());
    run(&["synth"]);
    let prep = run(&["prep"]);
    assert!(prep["truth_agreement"].as_f64().unwrap() > 0.5);
    assert!(prep["suggested_tau_p"].is_number());
    for target in ["attacker", "defense", "threeclass"] {
        run(&["train", "--target", target]);
    }
    for defense in ["false", "true"] {
        run(&["--defense", defense, "eval"]);
        let sim = run(&["--defense", defense, "simulate"]);
        assert_eq!(sim["exact"], true);
    }
    run(&["--attacker", "threeclass", "eval"]);
    let report = run(&["report"]);

    for cell in ["success_rate", "detection_rate", "efficiency"] {
        for side in ["without_defense", "with_defense"] {
            assert!(report[cell][side].is_number(), "{cell}.{side} missing: {report}");
        }
    }
    assert!(report["threeclass_success_rate"].is_number());
    let eff = &report["efficiency"];
    assert!(eff["with_defense"].as_f64().unwrap() < eff["without_defense"].as_f64().unwrap());

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report-per30min.json")).unwrap()).unwrap();
    assert_eq!(json["kind"], "report");
    assert_eq!(json["config"]["seed"], 7);
    assert!(json["version"].is_string());
    let csv = std::fs::read_to_string(dir.path().join("report-per30min.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# {"));
    assert_eq!(lines.next().unwrap(), "metric,without_defense,with_defense");
    assert_eq!(lines.count(), 5);
}
