use std::process::Command;

use serde_json::Value;

fn behc(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_behc")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn json(args: &[&str]) -> (i32, Vec<Value>) {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let (code, out, _) = behc(&full);
    (code, out.lines().map(|l| serde_json::from_str(l).unwrap()).collect())
}

#[test]
fn gap_bound_matches_remark() {
    let (code, recs) = json(&["gap-bound", "--nodes", "10001"]);
    assert_eq!(code, 0);
    let psi = recs[0]["results"]["psi"].as_f64().unwrap();
    assert!((psi - 0.0010432).abs() <= 1e-7);
    assert_eq!(recs[0]["params"]["nodes"], 10001);
}

#[test]
fn upper_bound_row() {
    let (code, recs) = json(&["bound", "--side", "upper", "--eta", "0.7", "--nodes", "12"]);
    assert_eq!(code, 0);
    let r = &recs[0]["results"];
    assert!((r["value"].as_f64().unwrap() - 0.743534).abs() <= 1e-6);
    assert!(r["lower_certified"].as_f64().unwrap() <= r["upper_certified"].as_f64().unwrap());
}

#[test]
fn text_and_json_carry_the_same_numbers() {
    let args = ["bound", "--side", "lower", "--eta", "0.35", "--nodes", "4"];
    let (_, text, _) = behc(&args);
    let (_, recs) = json(&args);
    for (k, v) in recs[0]["results"].as_object().unwrap() {
        if let Some(x) = v.as_f64().filter(|_| v.is_f64() && k != "wall_time_s") {
            let shown = text
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(&format!("{k}=")))
                .unwrap();
            assert_eq!(shown.parse::<f64>().unwrap(), x, "{k}");
        }
    }
}

#[test]
fn capacity_meets_loose_precision() {
    let (code, recs) = json(&["capacity", "--eta", "0.8", "--precision", "1e-3"]);
    assert_eq!(code, 0);
    let r = &recs[0]["results"];
    let (a, b) = (r["lower"].as_f64().unwrap(), r["upper"].as_f64().unwrap());
    assert!(b - a <= 1e-3 && a <= r["value"].as_f64().unwrap());
}

#[test]
fn endpoints_are_analytic() {
    for (eta, want) in [("0", 0.0), ("1", 1.0)] {
        let (code, recs) = json(&["capacity", "--eta", eta, "--precision", "1e-6"]);
        assert_eq!(code, 0);
        assert_eq!(recs[0]["results"]["value"].as_f64().unwrap(), want);
    }
}

#[test]
fn argument_errors_exit_2() {
    for args in [
        vec!["capacity", "--eta", "0.5"],
        vec!["capacity", "--eta", "0.5", "--precision", "-1"],
        vec!["bound", "--side", "upper", "--eta", "0.5", "--nodes", "1"],
        vec!["noisy", "--eta", "0.5", "--p", "0.7", "--nodes", "4"],
        vec!["sweep", "--etas", "a:b", "--precision", "1e-3", "--out", "x.csv"],
        vec!["export", "--kind", "mid", "--eta", "0.5", "--nodes", "3", "--out", "x"],
    ] {
        let (code, out, err) = behc(&args);
        assert_eq!(code, 2, "{args:?}");
        assert!(out.is_empty() && !err.is_empty(), "{args:?}");
    }
}

#[test]
fn numeric_failure_exits_1_with_record() {
    let (code, recs) = json(&["capacity", "--eta", "0.3", "--precision", "1e-8", "--max-nodes", "4"]);
    assert_eq!(code, 1);
    assert_eq!(recs[0]["results"]["status"], "precision_not_reached");
}

#[test]
fn noisy_full_harvest() {
    let (code, recs) = json(&["noisy", "--eta", "1", "--p", "0.2", "--nodes", "4", "--restarts", "2", "--seed", "3"]);
    assert_eq!(code, 0);
    let r = &recs[0]["results"];
    assert_eq!(r["certified"], true);
    let gap = r["rate"].as_f64().unwrap() - r["bsc_capacity"].as_f64().unwrap();
    assert!(gap.abs() <= 1e-4);
}

#[test]
fn verify_quick_suite() {
    let (code, recs) = json(&["verify", "--suite", "qgraph"]);
    assert_eq!(code, 0);
    assert!(recs.iter().all(|r| r["results"]["passed"] == true));
}

#[test]
fn export_writes_parseable_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ub.txt");
    let (code, recs) = json(&["export", "--kind", "ub", "--eta", "0.4", "--nodes", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let e = behc::export::read_file(&path).unwrap();
    assert_eq!(e.rows as u64, recs[0]["results"]["rows"].as_u64().unwrap());
    assert_eq!(e.rows, 6 * 16 + 13 * 4 + 8);
}
