//! Binary-level tests: exit codes, report shape, and byte-level
//! determinism of the output channel.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qss-lab"))
}

fn run_ok(args: &[&str]) -> (String, i32) {
    let output = bin().args(args).output().expect("binary runs");
    (
        String::from_utf8(output.stdout).expect("utf8 stdout"),
        output.status.code().unwrap_or(-1),
    )
}

#[test]
fn verify_passes_for_both_protocols() {
    for protocol in ["bb84sq", "e4"] {
        let (stdout, code) = run_ok(&["verify", "--protocol", protocol]);
        assert_eq!(code, 0, "{protocol}");
        let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
        assert_eq!(report["schema"], "qss-lab/1");
        assert_eq!(report["status"], "pass");
        assert!(report["checks"].as_array().unwrap().len() >= 10);
        assert_eq!(report["choi_operators"]["e0"]["dim"], 16);
    }
}

#[test]
fn verify_with_zero_tolerance_fails_with_exit_one() {
    let (stdout, code) = run_ok(&["verify", "--protocol", "e4", "--tolerance", "0"]);
    assert_eq!(code, 1);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["status"], "fail");
}

#[test]
fn config_errors_exit_with_code_two() {
    let (_, code) = run_ok(&["verify", "--protocol", "b92"]);
    assert_eq!(code, 2);
    let (_, code) = run_ok(&["ec", "--n", "25", "--qber", "0.1"]);
    assert_eq!(code, 2);
    let (_, code) = run_ok(&["curve", "--grid", "backwards"]);
    assert_eq!(code, 2);
    // Usage errors from argument parsing share the same exit class.
    let status = bin().arg("no-such-command").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn threshold_reports_ratio_for_both_protocols() {
    let (stdout, code) = run_ok(&["threshold", "--method", "analytic"]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let ratio = report["ratio_percent"].as_f64().unwrap();
    assert!((ratio - 18.2).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn curve_csv_has_fixed_header() {
    let (stdout, code) = run_ok(&[
        "curve",
        "--protocols",
        "e4",
        "--grid",
        "0:0.2:0.1",
        "--method",
        "mixture",
    ]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("qber,key_rate,protocol,method\n"));
    assert_eq!(stdout.lines().count(), 4);
}

#[test]
fn acceptance_criterion_11_determinism() {
    // Identical configurations (including seeds) must produce
    // byte-identical stdout and output files.
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec![
            "simulate".into(),
            "--protocol".into(),
            "e4".into(),
            "--attack".into(),
            "mixture:0.5".into(),
            "--rounds".into(),
            "40000".into(),
            "--seed".into(),
            "12345".into(),
        ],
        vec![
            "ec".into(),
            "--n".into(),
            "12".into(),
            "--qber".into(),
            "0.1".into(),
            "--trials".into(),
            "60".into(),
            "--seed".into(),
            "9".into(),
        ],
        vec!["verify".into(), "--protocol".into(), "bb84sq".into()],
        vec![
            "curve".into(),
            "--grid".into(),
            "0:0.27:0.03".into(),
            "--method".into(),
            "mixture".into(),
        ],
        vec!["threshold".into(), "--method".into(), "analytic".into()],
    ];
    for (i, case) in cases.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let path = dir.path().join(format!("case{i}_rep{rep}.out"));
            let output = bin()
                .args(case)
                .arg("--out")
                .arg(&path)
                .output()
                .expect("binary runs");
            assert!(output.status.success(), "case {i} failed");
            let file_bytes = std::fs::read(&path).unwrap();
            assert_eq!(
                output.stdout, file_bytes,
                "case {i}: stdout and --out differ"
            );
            outputs.push(output.stdout);
        }
        assert_eq!(outputs[0], outputs[1], "case {i}: reruns differ");
    }
    println!("[PASS] criterion 11: repeated runs with identical seeds are byte-identical");
}

#[test]
fn out_file_matches_stdout_for_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("verify.csv");
    let output = bin()
        .args([
            "verify",
            "--protocol",
            "e4",
            "--format",
            "csv",
            "--out",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let body = std::fs::read_to_string(Path::new(&path)).unwrap();
    assert!(body.starts_with("check,value,tolerance,pass\n"));
    assert_eq!(body.as_bytes(), output.stdout.as_slice());
}
