use std::path::{Path, PathBuf};
use std::process::Command;

use ccoll::cli::run;
use serde_json::Value;

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(name: &str, doc: &Value) {
    let v = schema(name);
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path)).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn ccoll(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["ccoll"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new(points: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("pts.csv"), points).unwrap();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }
}

const PLANAR: &str = "0.13,0.85\n0.76,0.26\n0.50,0.45\n0.65,0.79\n0.09,0.03\n0.84,0.43\n0.76,0.00\n0.45,0.72\n0.23,0.95\n0.90,0.90\n";

#[test]
fn build_then_verify_passes_and_validates() {
    let f = Fixture::new(PLANAR);
    let (pts, coll) = (f.path("pts.csv"), f.path("c.json"));
    let (code, _, err) = ccoll(&["build", "--input", &pts, "--epsilon", "0.5", "--output", &coll]);
    assert_eq!(code, 0, "{err}");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&coll).unwrap()).unwrap();
    assert_valid("collection.schema.json", &doc);
    assert_eq!(doc["n"], 10);
    assert!(doc["build_ms"].is_null());

    let (code, out, err) = ccoll(&[
        "verify", "--input", &pts, "--collection", &coll, "--epsilon", "0.5", "--probes", "2000", "--seed", "42",
    ]);
    assert_eq!(code, 0, "{err}");
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_valid("probe_report.schema.json", &report);
    assert_eq!(report["pass"], true);
}

#[test]
fn verify_below_build_epsilon_fails() {
    let f = Fixture::new(PLANAR);
    let (pts, coll) = (f.path("pts.csv"), f.path("q.json"));
    let (code, _, _) = ccoll(&[
        "build", "--input", &pts, "--epsilon", "0.5", "--builder", "quadratic", "--output", &coll,
    ]);
    assert_eq!(code, 0);
    let (code, out, _) = ccoll(&[
        "verify", "--input", &pts, "--collection", &coll, "--epsilon", "0.1", "--probes", "2000", "--mode", "exact",
    ]);
    assert_eq!(code, 1);
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_valid("probe_report.schema.json", &report);
    assert_eq!(report["pass"], false);
}

#[test]
fn verify_rejects_foreign_input() {
    let f = Fixture::new(PLANAR);
    let (pts, coll) = (f.path("pts.csv"), f.path("c.json"));
    assert_eq!(ccoll(&["build", "--input", &pts, "--epsilon", "0.5", "--output", &coll]).0, 0);
    std::fs::write(f.path("other.csv"), "0,0\n1,1\n").unwrap();
    let other = f.path("other.csv");
    let (code, _, err) = ccoll(&["verify", "--input", &other, "--collection", &coll, "--epsilon", "0.5"]);
    assert_eq!(code, 2, "{err}");
    std::fs::write(f.path("line.csv"), "0\n1\n").unwrap();
    let line = f.path("line.csv");
    let (code, _, err) = ccoll(&["verify", "--input", &line, "--collection", &coll, "--epsilon", "0.5"]);
    assert_eq!(code, 2);
    assert!(err.contains("dimension"), "{err}");
}

#[test]
fn wspd_covering_and_solve_outputs_validate() {
    let f = Fixture::new(PLANAR);
    let pts = f.path("pts.csv");
    let (code, out, _) = ccoll(&["wspd", "--input", &pts, "--t", "2", "--validate"]);
    assert_eq!(code, 0);
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_valid("wspd.schema.json", &doc);
    assert_eq!(doc["validation"]["pass"], true);

    let (code, out, _) = ccoll(&["covering", "--dim", "2", "--sigma", "0.5"]);
    assert_eq!(code, 0);
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_valid("covering.schema.json", &doc);
    assert_eq!(doc["size"], 13);

    let (code, out, err) = ccoll(&[
        "solve", "--input", &pts, "--problem", "kcenter", "--k", "1", "--epsilon", "0.5", "--oracle", "grid",
        "--resolution", "0.01",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("ratio"));
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_valid("solve.schema.json", &doc);
    assert!(doc["oracle"]["ratio"].as_f64().unwrap() <= 1.5);
}

#[test]
fn solve_problem_two_with_costs() {
    let f = Fixture::new("0,0\n1,0\n4,0\n5,0\n");
    let costs = f.path("costs.csv");
    std::fs::write(&costs, "1,1,1,1\n1,1,1,1\n1,2,1,1\n1,2,1,1\n").unwrap();
    let pts = f.path("pts.csv");
    let (code, out, err) = ccoll(&[
        "solve", "--input", &pts, "--problem", "p2", "--k", "2", "--cards", "2,1", "--costs", &costs,
        "--builder", "input-only", "--epsilon", "1",
    ]);
    assert_eq!(code, 0, "{err}");
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_valid("solve.schema.json", &doc);
    let assigned = doc["assignment"].as_array().unwrap().iter().filter(|a| !a.is_null()).count();
    assert_eq!(assigned, 3);

    let (code, _, _) = ccoll(&[
        "solve", "--input", &pts, "--problem", "p2", "--k", "2", "--cards", "3,2", "--costs", &costs,
    ]);
    assert_eq!(code, 2);
    std::fs::write(&costs, "1,1\n").unwrap();
    let (code, _, err) = ccoll(&[
        "solve", "--input", &pts, "--problem", "p1", "--k", "1", "--costs", &costs,
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("rows"), "{err}");
}

#[test]
fn exit_codes_for_bad_input_and_budget() {
    let f = Fixture::new("0,0\n1\n");
    let (code, _, err) = ccoll(&["build", "--input", &f.path("pts.csv"), "--epsilon", "0.5"]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");

    let f = Fixture::new(PLANAR);
    let pts = f.path("pts.csv");
    let (code, _, _) = ccoll(&["build", "--input", &pts, "--epsilon", "-1"]);
    assert_eq!(code, 2);
    let (code, _, _) = ccoll(&["build", "--input", &pts, "--epsilon", "0.5", "--norm", "l0"]);
    assert_eq!(code, 2);
    let (code, _, err) = ccoll(&["solve", "--input", &pts, "--problem", "kmedian", "--k", "4"]);
    assert_eq!(code, 3, "{err}");
    let (code, _, _) = ccoll(&["verify", "--input", &pts, "--collection", &pts, "--epsilon", "0.5"]);
    assert_eq!(code, 2);
    let (code, _, _) = ccoll(&["frobnicate"]);
    assert_eq!(code, 2);
    let (code, _, _) = ccoll(&["--threads", "0", "covering", "--dim", "1", "--sigma", "0.5"]);
    assert_eq!(code, 2);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let f = Fixture::new(PLANAR);
    let pts = f.path("pts.csv");
    let mut builds = Vec::new();
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let coll = f.path(&format!("c{threads}.json"));
        let (code, _, _) = ccoll(&[
            "--threads", threads, "build", "--input", &pts, "--epsilon", "0.5", "--builder", "quadratic", "--output",
            &coll,
        ]);
        assert_eq!(code, 0);
        builds.push(std::fs::read(&coll).unwrap());
        let (code, out, _) = ccoll(&[
            "--threads", threads, "verify", "--input", &pts, "--collection", &coll, "--epsilon", "0.5", "--probes",
            "1000",
        ]);
        assert_eq!(code, 0);
        reports.push(out);
    }
    assert_eq!(builds[0], builds[1]);
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn binary_honours_thread_variable_and_exit_codes() {
    let f = Fixture::new(PLANAR);
    let bin = env!("CARGO_BIN_EXE_ccoll");
    let out = Command::new(bin)
        .args(["covering", "--dim", "2", "--sigma", "0.5", "--norm", "linf"])
        .env("CCOLL_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["size"], 4);
    let out = Command::new(bin)
        .args(["covering", "--dim", "2", "--sigma", "0.5"])
        .env("CCOLL_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(bin)
        .args(["solve", "--input", &f.path("pts.csv"), "--problem", "kmeans", "--k", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
}
