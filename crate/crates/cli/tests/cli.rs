use std::path::Path;
use std::process::{Command, Output};

fn clickintent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clickintent")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = clickintent(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let out = clickintent(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = clickintent(&["simulate", "--out", "x", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_are_one_json_line() {
    let out = clickintent(&["eval", "--model", "/nonexistent/model.bin", "--dataset", "/nonexistent/d.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let last = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(v["error"], "io");
    assert!(v["message"].as_str().unwrap().contains("model.bin"));
}

#[test]
fn simulate_is_deterministic_and_echoes_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = clickintent(&["simulate", "--seed", "7", "--sessions", "50", "--out", p(d)]);
        assert!(out.status.success());
        let config: serde_json::Value =
            serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().next().unwrap()).unwrap();
        assert_eq!(config["config"]["seed"], 7);
        assert_eq!(config["config"]["subcommand"], "simulate");
    }
    for f in ["events.jsonl", "labels.jsonl", "truth.jsonl", "schema.json", "sim_config.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn full_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = d.join("sim");
    ok(&["simulate", "--preset", "planted-shock", "--seed", "3", "--sessions", "300", "--out", p(&sim)]);
    let dataset = d.join("dataset.jsonl");
    let summary = ok(&[
        "ingest",
        "--events", p(&sim.join("events.jsonl")),
        "--labels", p(&sim.join("labels.jsonl")),
        "--schema", p(&sim.join("schema.json")),
        "--out", p(&dataset),
    ]);
    assert!(summary.contains("\"encoded\":300"));
    let model = d.join("model.bin");
    ok(&[
        "train", "--dataset", p(&dataset), "--hidden-dim", "8", "--epochs", "3", "--seed", "5",
        "--out", p(&model), "--loss-curve", p(&d.join("loss.json")),
    ]);
    let report_path = d.join("eval.json");
    ok(&["eval", "--model", p(&model), "--dataset", p(&dataset), "--k", "1", "--out", p(&report_path)]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(report["k"], 1);
    assert_eq!(report["threshold"], 0.5);

    let analysis = d.join("analysis");
    ok(&[
        "analyze", "--model", p(&model), "--dataset", p(&dataset), "--clusters", "2", "--trajectories",
        "--out", p(&analysis),
    ]);
    for f in ["series.ndjson", "impacts.ndjson", "clusters.ndjson", "partition.json"] {
        assert!(analysis.join(f).exists(), "{f}");
    }
    let traj = std::fs::read_dir(analysis.join("trajectories")).unwrap().count();
    assert_eq!(traj, 300);

    let table = ok(&["contrast", "--impacts", p(&analysis.join("impacts.ndjson")), "--feature", "page_type"]);
    assert!(table.lines().next().unwrap().starts_with("page_type"));
    let records = analysis.join("reports/page_type.ndjson");
    ok(&[
        "contrast", "--impacts", p(&analysis.join("impacts.ndjson")), "--format", "records", "--out", p(&records),
    ]);
    assert!(std::fs::read_to_string(&records).unwrap().starts_with("{\"format\":\"clickintent-contrast\""));

    let store = d.join("tags.log");
    ok(&[
        "tag", "--store", p(&store), "record", "--author", "ana", "--key", "page_type=error",
        "--verdict", "suspected-cause", "--note", "drop after error", "--timestamp-ms", "5",
    ]);
    let listed = ok(&["tag", "--store", p(&store), "list", "--key", "page_type=error"]);
    assert_eq!(listed.lines().count(), 1);
    assert!(listed.contains("suspected_cause"));
    let bad = clickintent(&["tag", "--store", p(&store), "record", "--author", "a", "--key", "k=v", "--verdict", "meh"]);
    assert_eq!(bad.status.code(), Some(1));
}
