use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nlcps(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlcps"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NLCPS_OUTPUT_DIR")
        .output()
        .expect("failed to launch nlcps")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn profile(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../profiles")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(o), stderr(o));
}

/// Generates a small dataset and trains briefly on sizes 5 and 12.
fn trained(dir: &Path, out: &str) {
    assert_ok(&nlcps(&["gen-dataset", "--sizes", "5,12", "--per-size", "30", "--seed", "3", "--out", "ds.json"], dir));
    assert_ok(&nlcps(&["train", "--dataset", "ds.json", "--timesteps", "300", "--seed", "3", "--out-dir", out], dir));
}

#[test]
fn gen_dataset_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlcps(&["gen-dataset", "--sizes", "5,8", "--per-size", "7", "--out", "d.json"], dir.path());
    assert_ok(&o);
    assert!(stdout(&o).contains("wrote 14 configurations"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    assert_eq!(v["format_version"], "nlcps-dataset/1");
    assert_eq!(v["configurations"].as_array().unwrap().len(), 14);
}

#[test]
fn zero_per_size_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlcps(&["gen-dataset", "--per-size", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("dataset.json").exists());
}

#[test]
fn train_eval_recommend_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d, "out");
    for f in ["checkpoint-n5.json", "checkpoint-n12.json", "trace-n5.csv", "trace-n12.csv", "summary-n12.json"] {
        assert!(d.join("out").join(f).exists(), "{f} missing");
    }
    let trace = fs::read_to_string(d.join("out/trace-n12.csv")).unwrap();
    assert_eq!(trace.lines().count(), 301);

    // Same seed, same bytes.
    assert_ok(&nlcps(&["train", "--dataset", "ds.json", "--timesteps", "300", "--seed", "3", "--out-dir", "again"], d));
    for f in ["checkpoint-n12.json", "trace-n12.csv", "summary-n12.json"] {
        assert_eq!(fs::read(d.join("out").join(f)).unwrap(), fs::read(d.join("again").join(f)).unwrap(), "{f}");
    }

    let o = nlcps(
        &["eval", "--checkpoint", "out/checkpoint-n12.json", "--profile", &profile("12node.json"), "--out", "report.json"],
        d,
    );
    assert_ok(&o);
    let table = stdout(&o);
    for s in ["NL-CPS", "HIGH-RES", "LOW-LATENCY", "RANDOM"] {
        assert!(table.contains(s), "{table}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 4);
    assert_eq!(report["outcomes"][1]["decision"]["chosen_node_id"], "node6");
    assert_eq!(report["outcomes"][2]["decision"]["chosen_node_id"], "node3");
    assert!(d.join("report.txt").exists());

    let o = nlcps(&["recommend", "--checkpoint", "out/checkpoint-n12.json", "--inventory", &profile("18node.json")], d);
    assert_ok(&o);
    let rec: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(rec["chosen"].as_str().unwrap().starts_with("node"));
    assert_eq!(rec["scores"].as_array().unwrap().len(), 18);

    let o = nlcps(&["report", "out/trace-n5.csv", "--compare", "out/trace-n12.csv", "--out", "conv.csv"], d);
    assert_ok(&o);
    let series = fs::read_to_string(d.join("conv.csv")).unwrap();
    let lines: Vec<&str> = series.lines().collect();
    assert_eq!(lines[0], "run_id,step,moving_avg,variance,band_lower,band_upper");
    assert_eq!(lines.len(), 1 + 600);
    assert!(lines[99].contains("NaN"));
    assert!(!lines[100].contains("NaN"));
    assert!(lines[301].starts_with("trace-n12,0,"));
}

#[test]
fn output_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_nlcps"))
        .args(["gen-dataset", "--sizes", "5", "--per-size", "2"])
        .current_dir(dir.path())
        .env("NLCPS_OUTPUT_DIR", &out)
        .output()
        .unwrap();
    assert_ok(&o);
    assert!(out.join("dataset.json").exists());
}

#[test]
fn missing_checkpoint_writes_no_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlcps(&["eval", "--checkpoint", "nope.json", "--profile", &profile("12node.json"), "--out", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.json"));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn single_node_inventory_warns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d, "out");
    fs::write(d.join("one.json"), r#"{"nodes": [{"id": "solo", "cpu_cores": 2, "memory_gb": 4, "avg_latency_ms": 40}]}"#).unwrap();
    let o = nlcps(&["recommend", "--checkpoint", "out/checkpoint-n5.json", "--inventory", "one.json"], d);
    assert_ok(&o);
    assert!(stderr(&o).contains("warning"));
    let rec: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rec["chosen"], "solo");
}

#[test]
fn invalid_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("dup.json"),
        r#"{"nodes": [{"id": "n1", "cpu_cores": 2, "memory_gb": 4, "avg_latency_ms": 40},
                      {"id": "n1", "cpu_cores": 4, "memory_gb": 8, "avg_latency_ms": 20}]}"#,
    )
    .unwrap();
    trained(d, "out");
    let o = nlcps(&["recommend", "--checkpoint", "out/checkpoint-n5.json", "--inventory", "dup.json"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("\"n1\""), "{}", stderr(&o));

    let header = fs::read_to_string(d.join("out/trace-n5.csv")).unwrap();
    fs::write(d.join("empty.csv"), header.lines().next().unwrap()).unwrap();
    let o = nlcps(&["report", "empty.csv"], d);
    assert_eq!(o.status.code(), Some(2));

    fs::write(d.join("bad.csv"), "garbage\n1,2,3\n").unwrap();
    let o = nlcps(&["report", "bad.csv"], d);
    assert_eq!(o.status.code(), Some(2));

    let o = nlcps(&["train", "--dataset", "ds.json", "--sizes", "8"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("8-node"));

    fs::write(d.join("cfg.json"), r#"{"format_version": "nlcps-config/1", "training": {"bogus": 1}}"#).unwrap();
    let o = nlcps(&["train", "--config", "cfg.json", "--dataset", "ds.json"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn default_training_on_five_nodes_logs_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&nlcps(&["gen-dataset", "--sizes", "5", "--out", "ds.json"], d));
    let o = nlcps(&["train", "--dataset", "ds.json", "--out-dir", "out"], d);
    assert_ok(&o);
    let trace = fs::read_to_string(d.join("out/trace-n5.csv")).unwrap();
    assert_eq!(trace.lines().count(), 10_001);
    assert!(stdout(&o).contains("n=5"));

    assert_ok(&nlcps(&["report", "out/trace-n5.csv", "--out", "series.csv"], d));
    let series = fs::read_to_string(d.join("series.csv")).unwrap();
    let rows: Vec<&str> = series.lines().skip(1).collect();
    assert_eq!(rows.len(), 10_000);
    assert!(rows[..99].iter().all(|r| r.contains("NaN")));
    assert!(rows[99..].iter().all(|r| !r.contains("NaN")));
}

#[test]
fn gen_dataset_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a.json", "b.json"] {
        assert_ok(&nlcps(&["gen-dataset", "--sizes", "5", "--per-size", "3", "--seed", "7", "--out", out], d));
    }
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
    let o = nlcps(&["gen-dataset", "--out", "full.json"], d);
    assert!(stdout(&o).contains("wrote 800 configurations"));
}

#[test]
fn short_smoke_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&nlcps(&["gen-dataset", "--per-size", "5", "--out", "ds.json"], d));
    assert_ok(&nlcps(&["train", "--dataset", "ds.json", "--timesteps", "100", "--out-dir", "out"], d));
    for n in [5, 8, 10, 12] {
        for f in [format!("checkpoint-n{n}.json"), format!("trace-n{n}.csv"), format!("summary-n{n}.json")] {
            assert!(d.join("out").join(&f).exists(), "{f}");
        }
    }
}

#[test]
fn fully_trained_policy_reproduces_fixture_placements() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&nlcps(&["gen-dataset", "--out", "ds.json"], d));
    assert_ok(&nlcps(&["train", "--dataset", "ds.json", "--sizes", "12", "--out-dir", "out"], d));

    let o = nlcps(&["recommend", "--checkpoint", "out/checkpoint-n12.json", "--inventory", &profile("12node.json")], d);
    assert_ok(&o);
    let rec: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rec["chosen"], "node10");

    let o = nlcps(
        &["eval", "--checkpoint", "out/checkpoint-n12.json", "--profile", &profile("18node.json"), "--out", "r18.json"],
        d,
    );
    assert_ok(&o);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r18.json")).unwrap()).unwrap();
    let chosen: Vec<&str> = report["outcomes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["decision"]["chosen_node_id"].as_str().unwrap())
        .collect();
    assert_eq!(&chosen[..3], ["node17", "node1", "node5"]);
    assert!(!stdout(&o).contains("MISMATCH"));
}

#[test]
fn non_numeric_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d, "out");
    fs::write(
        d.join("bad.json"),
        r#"{"nodes": [{"id": "n1", "cpu_cores": "four", "memory_gb": 4, "avg_latency_ms": 40},
                      {"id": "n2", "cpu_cores": 2, "memory_gb": 8, "avg_latency_ms": 20}]}"#,
    )
    .unwrap();
    let o = nlcps(&["recommend", "--checkpoint", "out/checkpoint-n5.json", "--inventory", "bad.json"], d);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("cpu_cores") && err.contains("row 1"), "{err}");
}
