use std::path::Path;
use std::process::{Command, Output};

fn vldcop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vldcop"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn events(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect()
}

#[test]
fn gen_run_report_validate_distill() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();

    let gen = vldcop(&["gen", "--bench", "vldgc", "--count", "2", "--out", "tasks"], cwd);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let task = cwd.join("tasks/vldgc-random-n10-m23-d4-s0");
    assert!(task.join("task.toml").is_file());
    assert!(std::fs::read_dir(&task).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));

    std::fs::write(
        cwd.join("sweep.toml"),
        "[base]\nbenchmark = \"ldgc\"\niterations = 12\ncapture_prompts = true\noutput_dir = \"runs\"\n\n\
         [sweep]\ninstances = 2\narchetypes = [\"dsa-oracle\", \"random\", \"fmc-dsa\", \"copa-dsa\", \"nas\"]\n",
    )
    .unwrap();
    let run = vldcop(&["run", "--config", "sweep.toml", "--jobs", "2"], cwd);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let ev = events(&run);
    let done = ev.iter().find(|e| e["event"] == "sweep-finished").expect("finish event");
    assert_eq!(done["runs"], 10);
    assert_eq!(done["failed"], 0);

    let report = vldcop(&["report", "runs"], cwd);
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    let csv = std::fs::read_to_string(cwd.join("runs/report-ldgc.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
    roxmltree::Document::parse(&std::fs::read_to_string(cwd.join("runs/report-ldgc.svg")).unwrap()).unwrap();

    let validate = vldcop(&["validate", "runs", "tasks"], cwd);
    assert!(validate.status.success(), "{}", String::from_utf8_lossy(&validate.stderr));

    let distill = vldcop(&["export-distill", "runs", "--out", "pairs.jsonl", "--kind", "get-max-action", "--limit", "40"], cwd);
    assert!(distill.status.success(), "{}", String::from_utf8_lossy(&distill.stderr));
    let pairs = std::fs::read_to_string(cwd.join("pairs.jsonl")).unwrap();
    assert_eq!(pairs.lines().count(), 40);
}

#[test]
fn tampered_run_log_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let run = vldcop(&["run", "--archetype", "dsa-oracle", "--iterations", "5", "--out", "runs"], cwd);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let log = std::fs::read_dir(cwd.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .expect("run log");
    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = text.replacen("\"cost\":", "\"cost\":1", 1);
    assert_ne!(tampered, text);
    std::fs::write(&log, tampered).unwrap();
    let validate = vldcop(&["validate", "runs"], cwd);
    assert!(!validate.status.success());
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vldcop(&["run", "--archetype", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
