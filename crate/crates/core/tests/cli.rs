mod common;

use std::path::Path;
use std::process::{Command, Output};

use beda_core::games::Scenario;
use beda_core::harness::{load_records, read_dataset, MetricsReport};
use common::http::dead_endpoint;
use serde_json::{json, Value};

fn beda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beda"))
        .args(args)
        .current_dir(dir)
        .env_remove("EST_ENDPOINT")
        .env_remove("GEN_ENDPOINT")
        .env_remove("GEN_MODEL")
        .env_remove("GEN_API_KEY")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: stdout={} stderr={}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn write_config(dir: &Path, name: &str, value: Value) {
    std::fs::write(
        dir.join(name),
        serde_json::to_string_pretty(&value).unwrap(),
    )
    .unwrap();
}

#[test]
fn gen_dataset_ckbg_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = beda(
        dir.path(),
        &[
            "gen-dataset",
            "ckbg",
            "--n",
            "150",
            "--seed",
            "7",
            "--out",
            "d.jsonl",
        ],
    );
    assert_eq!(code(&out), 0);
    let summary = stdout_json(&out);
    assert_eq!(summary["settings"], 150);
    assert_eq!(summary["conditions"], 450);
    assert_eq!(summary["avg_conditions"], 3.0);
    let first = std::fs::read(dir.path().join("d.jsonl")).unwrap();
    assert_eq!(
        read_dataset(&dir.path().join("d.jsonl")).unwrap().len(),
        150
    );
    let again = beda(
        dir.path(),
        &[
            "gen-dataset",
            "ckbg",
            "--n",
            "150",
            "--seed",
            "7",
            "--out",
            "d.jsonl",
        ],
    );
    assert_eq!(code(&again), 0);
    assert_eq!(std::fs::read(dir.path().join("d.jsonl")).unwrap(), first);
}

#[test]
fn gen_dataset_other_games() {
    let dir = tempfile::tempdir().unwrap();
    let out = beda(
        dir.path(),
        &[
            "gen-dataset",
            "mf",
            "--n",
            "4",
            "--friends",
            "3",
            "--attributes",
            "2",
            "--out",
            "mf.jsonl",
        ],
    );
    assert_eq!(code(&out), 0);
    for s in read_dataset(&dir.path().join("mf.jsonl")).unwrap() {
        let Scenario::Mf(s) = s else { panic!("not mf") };
        assert_eq!(s.attributes.len(), 2);
        assert_eq!(s.friends[0].len(), 3);
    }
    let out = beda(
        dir.path(),
        &[
            "gen-dataset",
            "casino",
            "--n",
            "5",
            "--seed",
            "1",
            "--out",
            "c/c.jsonl",
        ],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_json(&out)["scenarios"], 5);
    let out = beda(
        dir.path(),
        &[
            "gen-dataset",
            "ckbg",
            "--n",
            "40",
            "--conditions",
            "train",
            "--out",
            "t.jsonl",
        ],
    );
    assert_eq!(code(&out), 0);
}

#[test]
fn gen_dataset_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let out = beda(
        dir.path(),
        &[
            "gen-dataset",
            "ckbg",
            "--n",
            "3",
            "--conditions",
            "many",
            "--out",
            "d.jsonl",
        ],
    );
    assert_eq!(code(&out), 2);
    let out = beda(
        dir.path(),
        &[
            "gen-dataset",
            "ckbg",
            "--n",
            "3",
            "--conditions",
            "9",
            "--out",
            "d.jsonl",
        ],
    );
    assert_eq!(code(&out), 2);
    let out = beda(
        dir.path(),
        &["gen-dataset", "chess", "--n", "3", "--out", "d.jsonl"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn run_then_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "c.json",
        json!({"game": "casino", "method": "BEDA", "n_episodes": 6, "repetitions": 2, "seed": 4, "output": "out/r.jsonl", "workers": 2}),
    );
    let out = beda(dir.path(), &["run", "--config", "c.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.counts.episodes, 12);
    let on_disk: MetricsReport = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/r.report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(on_disk, report);
    let eval = beda(dir.path(), &["eval", "--records", "out/r.jsonl"]);
    assert_eq!(code(&eval), 0);
    let evaluated: MetricsReport = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(evaluated, report);
    assert_eq!(
        load_records(&dir.path().join("out/r.jsonl")).unwrap().len(),
        12
    );
}

#[test]
fn run_accepts_toml() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "game = \"mf\"\nmethod = \"WO_BELIEF_COT\"\nn_episodes = 2\nrepetitions = 1\noutput = \"r.jsonl\"\n\n[dataset.mf_shape]\nfriends_per_list = 3\nattributes = 2\n",
    )
    .unwrap();
    let out = beda(dir.path(), &["run", "--config", "c.toml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["game"], "mf");
}

#[test]
fn run_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = beda(dir.path(), &["run", "--config", "missing.json"]);
    assert_eq!(code(&out), 2);
    write_config(
        dir.path(),
        "a.json",
        json!({"game": "ckbg", "method": "BEDA", "n_episodes": 0, "output": "r.jsonl"}),
    );
    assert_eq!(code(&beda(dir.path(), &["run", "--config", "a.json"])), 2);
    write_config(
        dir.path(),
        "b.json",
        json!({"game": "ckbg", "method": "WO_BELIEF", "estimator": {"kind": "keyword"}, "n_episodes": 1, "output": "r.jsonl"}),
    );
    assert_eq!(code(&beda(dir.path(), &["run", "--config", "b.json"])), 2);
    write_config(
        dir.path(),
        "c.json",
        json!({"game": "ckbg", "method": "BEDA", "n_episodes": 1, "output": "r.jsonl", "dataset": {"path": "nowhere.jsonl"}}),
    );
    assert_eq!(code(&beda(dir.path(), &["run", "--config", "c.json"])), 2);
    write_config(
        dir.path(),
        "d.json",
        json!({"game": "ckbg", "method": "BEDA", "n_episodes": 1, "output": "r.jsonl", "generator": {"backend": {"kind": "remote"}}}),
    );
    let out = beda(dir.path(), &["run", "--config", "d.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("GEN_ENDPOINT"));
    std::fs::write(dir.path().join("e.json"), "{ not json").unwrap();
    assert_eq!(code(&beda(dir.path(), &["run", "--config", "e.json"])), 2);
}

#[test]
fn run_backend_failure_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "c.json",
        json!({
            "game": "mf", "method": "BEDA", "n_episodes": 2, "repetitions": 1, "output": "r.jsonl",
            "estimator": {"kind": "remote", "endpoint": dead_endpoint(), "retries": 0, "timeout_ms": 500},
        }),
    );
    let out = beda(dir.path(), &["run", "--config", "c.json"]);
    assert_eq!(code(&out), 3);
    let report: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.counts.infrastructure_failures, 2);
    assert_eq!(
        code(&beda(dir.path(), &["eval", "--records", "r.jsonl"])),
        3
    );
}

#[test]
fn run_all_format_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("script.json"),
        r#"[{"game": "ckbg", "role": "keeper", "turn_index": 0, "text": "  "}]"#,
    )
    .unwrap();
    write_config(
        dir.path(),
        "c.json",
        json!({
            "game": "ckbg", "method": "WO_BELIEF", "n_episodes": 3, "repetitions": 1, "output": "r.jsonl",
            "generator": {"backend": {"kind": "scripted", "script": "script.json"}},
        }),
    );
    let out = beda(dir.path(), &["run", "--config", "c.json"]);
    assert_eq!(code(&out), 4);
    let report = stdout_json(&out);
    assert_eq!(report["counts"]["format_errors"], 3);
    assert_eq!(report["mean"]["success_rate"], Value::Null);
    assert_eq!(
        code(&beda(dir.path(), &["eval", "--records", "r.jsonl"])),
        4
    );
    let emit = beda(
        dir.path(),
        &[
            "emit-training-data",
            "--records",
            "r.jsonl",
            "--clip-max",
            "1",
            "--neg-ratio",
            "1",
            "--out",
            "t.jsonl",
        ],
    );
    assert_eq!(code(&emit), 4);
}

#[test]
fn eval_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    assert_eq!(
        code(&beda(dir.path(), &["eval", "--records", "empty.jsonl"])),
        4
    );
    std::fs::write(dir.path().join("bad.jsonl"), "{\"schema\":1,\n").unwrap();
    let out = beda(dir.path(), &["eval", "--records", "bad.jsonl"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:1"));
}

#[test]
fn emit_training_data_lines() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "c.json",
        json!({"game": "mf", "method": "BEDA", "n_episodes": 3, "repetitions": 1, "seed": 2, "output": "r.jsonl"}),
    );
    assert_eq!(code(&beda(dir.path(), &["run", "--config", "c.json"])), 0);
    let args = |out: &'static str| {
        vec![
            "emit-training-data",
            "--records",
            "r.jsonl",
            "--clip-max",
            "2",
            "--neg-ratio",
            "1",
            "--seed",
            "9",
            "--out",
            out,
        ]
    };
    let out = beda(dir.path(), &args("t/a.jsonl"));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    let text = std::fs::read_to_string(dir.path().join("t/a.jsonl")).unwrap();
    let lines: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(summary["examples"], lines.len());
    assert_eq!(summary["positives"], summary["negatives"]);
    for line in &lines {
        let obj = line.as_object().unwrap();
        for key in ["context", "event", "perspective", "label"] {
            assert!(obj.contains_key(key), "{line}");
        }
        assert!(obj["label"].is_boolean());
        assert!(obj["context"].is_string() && obj["event"].is_string());
        assert!(["self_truth", "opponent_knows"].contains(&obj["perspective"].as_str().unwrap()));
    }
    assert_eq!(code(&beda(dir.path(), &args("t/b.jsonl"))), 0);
    assert_eq!(
        text,
        std::fs::read_to_string(dir.path().join("t/b.jsonl")).unwrap()
    );
}
