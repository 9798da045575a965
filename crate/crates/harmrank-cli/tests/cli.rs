//! End-to-end CLI checks against the shipped fixtures.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn harmrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmrank"))
        .args(args)
        .output()
        .expect("failed to launch harmrank")
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed: {}\n{}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn run_writes_reports_and_prints_table() {
    let out_dir = tempfile::TempDir::new().unwrap();
    let dataset = fixture("sample_dataset.jsonl");
    let output = harmrank(&[
        "run",
        "--dataset",
        dataset.to_str().unwrap(),
        "--n",
        "10",
        "--m",
        "4",
        "--harm",
        "0.3",
        "--seed",
        "5",
        "--ranker",
        "original",
        "--ranker",
        "oracle",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("oracle"), "missing oracle row:\n{stdout}");
    assert!(out_dir.path().join("report.json").is_file());
    assert!(out_dir.path().join("aggregate.csv").is_file());
    assert!(out_dir.path().join("plot_data.csv").is_file());

    let csv = std::fs::read_to_string(out_dir.path().join("aggregate.csv")).unwrap();
    let oracle_line = csv
        .lines()
        .find(|l| l.starts_with("oracle,30"))
        .expect("oracle aggregate row");
    assert!(oracle_line.contains("1.000000"), "{oracle_line}");
}

#[test]
fn metrics_scores_file_order() {
    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().join("ranked.jsonl");
    // Harmless block then harmful block: the best possible order.
    let mut lines = String::new();
    for i in 0..6 {
        lines.push_str(&format!(
            "{{\"id\": \"n{i}\", \"text\": \"good {i}\", \"label\": 0}}\n"
        ));
    }
    for i in 0..2 {
        lines.push_str(&format!(
            "{{\"id\": \"h{i}\", \"text\": \"bad {i}\", \"label\": 1}}\n"
        ));
    }
    std::fs::write(&path, lines).unwrap();

    let output = harmrank(&[
        "metrics",
        "--dataset",
        path.to_str().unwrap(),
        "--k-tp",
        "2,4",
        "--k-pp",
        "1,2",
    ]);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("tp2=1"), "{stdout}");
    assert!(stdout.contains("ewn=1"), "{stdout}");
    assert!(stdout.contains("pp1=0.875"), "{stdout}");
}

#[test]
fn rerank_oracle_pushes_harmful_to_end() {
    let out = tempfile::TempDir::new().unwrap();
    let ranked_path = out.path().join("ranked.jsonl");
    let dataset = fixture("sample_dataset.jsonl");
    let output = harmrank(&[
        "rerank",
        "--dataset",
        dataset.to_str().unwrap(),
        "--ranker",
        "oracle",
        "--out",
        ranked_path.to_str().unwrap(),
    ]);
    stdout_of(&output);

    let ranked = std::fs::read_to_string(&ranked_path).unwrap();
    let labels: Vec<u64> = ranked
        .lines()
        .map(|line| {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            value["label"].as_u64().unwrap()
        })
        .collect();
    assert_eq!(labels.len(), 40);
    // All 28 harmless first, all 12 harmful last.
    assert!(labels[..28].iter().all(|&l| l == 0));
    assert!(labels[28..].iter().all(|&l| l == 1));
}

#[test]
fn select_exemplars_covers_blobs_deterministically() {
    let dataset = fixture("sample_dataset.jsonl");
    let embeddings = fixture("sample_embeddings.jsonl");
    let run = || {
        stdout_of(&harmrank(&[
            "select-exemplars",
            "--dataset",
            dataset.to_str().unwrap(),
            "--embeddings",
            embeddings.to_str().unwrap(),
            "--exemplars",
            "3",
            "--seed",
            "7",
        ]))
    };
    let first = run();
    assert_eq!(first.lines().count(), 3);
    assert_eq!(first, run(), "selection must be seed-deterministic");
}

#[test]
fn cache_gc_empties_directory_at_zero_budget() {
    let dir = tempfile::TempDir::new().unwrap();
    // Seed the cache directory with fake entries shaped like real ones.
    for i in 0..3 {
        let name = format!("{:064x}.json", i);
        std::fs::write(
            dir.path().join(name),
            format!("{{\"digest\": \"{i:064x}\", \"reply\": \"Response=NONE\"}}"),
        )
        .unwrap();
    }
    let output = harmrank(&[
        "cache-gc",
        "--cache-dir",
        dir.path().to_str().unwrap(),
        "--max-bytes",
        "0",
    ]);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("0 entries remain"), "{stdout}");
    let remaining: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(Result::ok)
        .filter(|e| e.file_name() != "index.json")
        .collect();
    assert!(remaining.is_empty(), "entries were not removed");
}

#[test]
fn run_without_dataset_fails_with_config_error() {
    let output = harmrank(&["run", "--ranker", "oracle"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("dataset"), "{stderr}");
}

#[test]
fn config_file_drives_run() {
    let dir = tempfile::TempDir::new().unwrap();
    let dataset = fixture("sample_dataset.jsonl");
    let out_dir = dir.path().join("out");
    let config_path = dir.path().join("exp.conf");
    std::fs::write(
        &config_path,
        format!(
            "# tiny experiment\n\
             dataset = {}\n\
             n = 8\n\
             m = 2\n\
             harm = 0.25\n\
             seed = 3\n\
             k-tp = 2,4\n\
             k-pp = 1,2\n\
             ranker = original\n\
             ranker = oracle\n\
             out = {}\n",
            dataset.display(),
            out_dir.display()
        ),
    )
    .unwrap();
    let output = harmrank(&["run", "--config", config_path.to_str().unwrap()]);
    stdout_of(&output);
    assert!(out_dir.join("aggregate.csv").is_file());
}
