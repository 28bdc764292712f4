use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn agentnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agentnet"))
        .args(args)
        .env_remove("AGENTNET_WORKERS")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.lines().last().unwrap()).unwrap()
}

fn write_graph(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const K4_PLUS_TAIL: &str = "5 1\n1\n1\n1\n1\n1\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n3 4\n";

#[test]
fn help_documents_every_command() {
    let out = agentnet(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "generate-dataset",
        "train",
        "eval",
        "grid",
        "theory-check",
        "fig3",
        "table1",
        "ablation-j",
        "agent-sweep",
        "heatmap",
        "grad-check",
        "oracle",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert!(text.contains("--workers") && text.contains("--seed") && text.contains("--out"));
}

#[test]
fn unknown_commands_and_bad_flags_fail_with_an_error_line() {
    assert_eq!(error_json(&agentnet(&["frobnicate"]))["error"], "usage");
    assert_eq!(error_json(&agentnet(&["--workers", "many", "grad-check"]))["error"], "usage");
    assert_eq!(error_json(&agentnet(&["--workers", "0", "grad-check"]))["error"], "usage");
    let out = agentnet(&["oracle", "cliques", "--graph", "/nonexistent/g.txt", "--node", "0"]);
    assert_eq!(error_json(&out)["error"], "io");
}

#[test]
fn oracle_counts_cliques_and_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_graph(dir.path(), "g.txt", K4_PLUS_TAIL);
    let v = stdout_json(&agentnet(&["oracle", "cliques", "--graph", &g, "--node", "3"]));
    let counts: Vec<(u64, u64)> = v["cliques"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["size"].as_u64().unwrap(), c["count"].as_u64().unwrap()))
        .collect();
    assert_eq!(counts, vec![(2, 4), (3, 3), (4, 1), (5, 0)]);
    let v = stdout_json(&agentnet(&["oracle", "cycles", "--graph", &g, "--node", "0", "--length", "4"]));
    assert_eq!(v["count"], 3);
    let v = stdout_json(&agentnet(&["oracle", "neighborhood", "--graph", &g, "--node", "4", "--radius", "1"]));
    assert_eq!(v["ball_nodes"], serde_json::json!([4, 3]));
    let out = agentnet(&["oracle", "cliques", "--graph", &g, "--node", "9"]);
    assert_eq!(error_json(&out)["error"], "graph");
}

#[test]
fn oracle_compares_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let c6 = write_graph(dir.path(), "c6.txt", "6 1\n1\n1\n1\n1\n1\n1\n0 1\n1 2\n2 3\n3 4\n4 5\n5 0\n");
    let two_c3 = write_graph(dir.path(), "t.txt", "6 1\n1\n1\n1\n1\n1\n1\n0 1\n1 2\n2 0\n3 4\n4 5\n5 3\n");
    let v = stdout_json(&agentnet(&["oracle", "wl", "--graph", &c6, "--other", &two_c3]));
    assert_eq!(v["wl_indistinguishable"], true);
    assert_eq!(v["isomorphic"], false);
}

#[test]
fn generate_dataset_writes_only_to_out() {
    let dir = tempfile::tempdir().unwrap();
    for family in ["four-cycles", "csl", "two-wl", "ladder", "theorem8", "lemma4"] {
        let path = dir.path().join(format!("{family}.json"));
        let mut args = vec!["generate-dataset", "--family", family, "--seed", "3", "--out", path.to_str().unwrap()];
        if family == "four-cycles" {
            args.extend(["--count", "10"]);
        }
        if family == "theorem8" {
            args.extend(["--hubs", "2", "--primary-depth", "3", "--secondary-depth", "4", "--branching", "2"]);
        }
        let v = stdout_json(&agentnet(&args));
        assert!(v["graphs"].as_u64().unwrap() >= 2, "{family}");
        let ds = agentnet_graph::datasets::LabeledDataset::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
        assert!(!ds.items.is_empty());
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 6);
    let out = agentnet(&["generate-dataset", "--family", "ladder", "--cells", "1", "--out", "/tmp/unused.json"]);
    assert!(!out.status.success());
}

#[test]
fn training_twice_gives_identical_metrics_and_checkpoints_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "dataset": {"family": "ladder", "cells": 5, "density": 0.5, "crossed_cells": null, "pairs": 10, "seed": 2},
        "model": {"variant": "full", "agents": 2, "steps": 4, "hidden": 8, "class_count": 2},
        "batch_size": 4,
        "training_steps": 20,
        "seeds": [0, 1],
        "lr": 0.002,
        "lr_end": 1e-11,
        "weight_decay": 0.1,
        "clip_norm": 1.0,
        "early_stop_patience": null,
        "log_every": 5,
        "test_fraction": 0.2,
        "eval_rollouts": 2
    });
    let cfg_path = dir.path().join("c.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let mut metrics = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let v = stdout_json(&agentnet(&[
            "--workers", "1", "train", "--config", cfg_path.to_str().unwrap(), "--seed", "1", "--out", out.to_str().unwrap(),
        ]));
        assert!(v["mean_test_accuracy"].as_f64().unwrap() >= 0.0);
        metrics.push(fs::read(out.join("metrics.json")).unwrap());
        assert!(out.join("seeds.csv").exists() && out.join("timing.json").exists());
    }
    assert_eq!(metrics[0], metrics[1]);
    let m: serde_json::Value = serde_json::from_slice(&metrics[0]).unwrap();
    assert_eq!(m["seeds"].as_array().unwrap().len(), 1);
    assert_eq!(m["seeds"][0]["seed"], 1);

    let ds = dir.path().join("ds.json");
    stdout_json(&agentnet(&["generate-dataset", "--family", "ladder", "--cells", "5", "--pairs", "4", "--out", ds.to_str().unwrap()]));
    let ckpt = dir.path().join("a/checkpoint-seed1.json");
    let v = stdout_json(&agentnet(&[
        "eval", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", ds.to_str().unwrap(), "--rollouts", "3",
    ]));
    let acc = v["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let heat = dir.path().join("heat");
    let v = stdout_json(&agentnet(&[
        "heatmap", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", ds.to_str().unwrap(), "--out", heat.to_str().unwrap(),
    ]));
    assert_eq!(v["graphs"], 8);
    let csv = fs::read_to_string(heat.join("heatmap-0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("node_id,visit_count"));
    let total: u64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 2 * 5);
}

#[test]
fn grid_persists_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "dataset": {"family": "ladder", "cells": 4, "density": 0.5, "crossed_cells": null, "pairs": 6, "seed": 2},
        "model": {"variant": "simplified", "agents": 2, "steps": 3, "hidden": 4, "class_count": 2},
        "batch_size": 4, "training_steps": 5, "seeds": [0], "lr": 0.001, "lr_end": 1e-11, "weight_decay": 0.1,
        "clip_norm": 1.0, "early_stop_patience": null, "log_every": 5, "test_fraction": 0.2, "eval_rollouts": 1
    });
    let (c, a) = (dir.path().join("c.json"), dir.path().join("a.json"));
    fs::write(&c, cfg.to_string()).unwrap();
    fs::write(&a, r#"{"lr": [0.001, 0.01], "hidden": [4, 6]}"#).unwrap();
    let out = dir.path().join("grid");
    let v = stdout_json(&agentnet(&[
        "grid", "--config", c.to_str().unwrap(), "--axes", a.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]));
    assert_eq!(v["cells"].as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(out.join("grid.json").exists() && out.join("grid.timing.json").exists() && out.join("best.json").exists());
}

#[test]
fn fast_theory_check_reports_json() {
    let v = stdout_json(&agentnet(&["theory-check", "--seed", "7", "--fast"]));
    let checks = v.as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["pass"] == true), "{v}");
}

#[test]
fn grad_check_passes() {
    let v = stdout_json(&agentnet(&["grad-check", "--seed", "3"]));
    assert!(v["ops"].as_array().unwrap().iter().all(|c| c["pass"] == true), "{v}");
    assert!(v["rollouts"].as_array().unwrap().iter().all(|c| c["pass"] == true), "{v}");
    assert_eq!(v["one_hot_failures"], 0);
    assert!(v["closed_form_deviation"].as_f64().unwrap() < 1e-9);
}
