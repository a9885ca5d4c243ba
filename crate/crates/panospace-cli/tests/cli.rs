//! End-to-end runs of the `panospace` binary over a synthetic panorama:
//! project -> build-graph -> gen-tasks -> eval, plus exit-code contracts
//! and byte-identical reruns.

use std::path::Path;
use std::process::{Command, Output};

use panospace::erp::ErpImage;
use panospace::taskgen;

mod common;
use common::{write_detection_fixtures, write_fixture_erp};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_panospace"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        stdout(out),
        String::from_utf8_lossy(&out.stderr)
    );
}





#[test]
fn project_writes_views_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let erp = dir.path().join("pano.png");
    write_fixture_erp(&erp, 256, 128);
    let out_dir = dir.path().join("views");
    let out = run(&[
        "project",
        "--erp",
        erp.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--width",
        "64",
        "--height",
        "64",
    ]);
    assert_code(&out, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    let views = manifest["views"].as_array().unwrap();
    assert_eq!(views.len(), 6);
    assert_eq!(views[0]["yaw_deg"].as_f64().unwrap(), -180.0);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
    for v in views {
        assert!(out_dir.join(v["file"].as_str().unwrap()).exists());
    }
}

#[test]
fn project_rejects_bad_aspect() {
    let dir = tempfile::tempdir().unwrap();
    let erp = dir.path().join("square.png");
    let img = ErpImage::constant_color(128, 64, [1.0, 2.0, 3.0]).unwrap();
    img.save_png(&erp).unwrap();
    // rewrite as a square image so the 2:1 check fires
    let square = image::RgbImage::new(64, 64);
    square.save(&erp).unwrap();
    let out = run(&["project", "--erp", erp.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_code(&out, 2);
}

#[test]
fn full_pipeline_runs_and_oracle_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let (det, redet, depth) = write_detection_fixtures(dir.path());

    let graph_path = dir.path().join("graph.json");
    let out = run(&[
        "build-graph",
        "--detections",
        det.to_str().unwrap(),
        "--redetections",
        redet.to_str().unwrap(),
        "--depth",
        depth.to_str().unwrap(),
        "--out",
        graph_path.to_str().unwrap(),
        "--image-width",
        "256",
        "--image-height",
        "128",
    ]);
    assert_code(&out, 0);
    let g = panospace::graph::parse_graph(&std::fs::read_to_string(&graph_path).unwrap()).unwrap();
    assert_eq!(g.nodes.len(), 3, "chair, lamp, table survive; noise is dropped");
    assert!(g.nodes.iter().all(|n| n.distance == Some(3.0)));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("graph.report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["kept"], 3);
    assert_eq!(report["counts_by_stage"]["confidence"], 1);

    let tasks_path = dir.path().join("tasks.jsonl");
    let out = run(&[
        "gen-tasks",
        "--graph",
        graph_path.to_str().unwrap(),
        "--out",
        tasks_path.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_code(&out, 0);
    let (header, tasks) =
        taskgen::parse_tasks(&std::fs::read_to_string(&tasks_path).unwrap()).unwrap();
    assert!(header.count > 0 && header.count == tasks.len());
    assert!(header.config_hash.is_some());

    // oracle predictions straight from the graph
    let preds_path = dir.path().join("preds.jsonl");
    let lines: Vec<String> = tasks
        .iter()
        .map(|t| {
            let answer = taskgen::recompute_answer(t, &g).unwrap();
            serde_json::to_string(
                &serde_json::json!({ "task_id": t.id, "raw_text": answer }),
            )
            .unwrap()
        })
        .collect();
    std::fs::write(&preds_path, lines.join("\n") + "\n").unwrap();

    let report_path = dir.path().join("eval.json");
    let out = run(&[
        "eval",
        "--tasks",
        tasks_path.to_str().unwrap(),
        "--predictions",
        preds_path.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["report"]["mc"]["accuracy"].as_f64().unwrap(), 1.0);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (det, redet, depth) = write_detection_fixtures(dir.path());
    let mut artifacts: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for pass in 0..2 {
        let graph_path = dir.path().join(format!("graph{pass}.json"));
        let tasks_path = dir.path().join(format!("tasks{pass}.jsonl"));
        assert_code(
            &run(&[
                "build-graph",
                "--detections",
                det.to_str().unwrap(),
                "--redetections",
                redet.to_str().unwrap(),
                "--depth",
                depth.to_str().unwrap(),
                "--out",
                graph_path.to_str().unwrap(),
                "--image-width",
                "256",
                "--image-height",
                "128",
            ]),
            0,
        );
        assert_code(
            &run(&[
                "gen-tasks",
                "--graph",
                graph_path.to_str().unwrap(),
                "--out",
                tasks_path.to_str().unwrap(),
                "--seed",
                "11",
            ]),
            0,
        );
        artifacts.push((std::fs::read(&graph_path).unwrap(), std::fs::read(&tasks_path).unwrap()));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "graph differs between runs");
    assert_eq!(artifacts[0].1, artifacts[1].1, "task file differs between runs");
}

#[test]
fn config_file_overrides_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("cfg.json");
    std::fs::write(&good, r#"{ "seed": 5, "confidence_threshold": 0.4 }"#).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{ "sede": 5 }"#).unwrap();

    let (det, redet, _) = write_detection_fixtures(dir.path());
    let out_path = dir.path().join("g.json");
    let base = |cfg: &Path| {
        run(&[
            "build-graph",
            "--config",
            cfg.to_str().unwrap(),
            "--detections",
            det.to_str().unwrap(),
            "--redetections",
            redet.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ])
    };
    assert_code(&base(&good), 0);
    let out = base(&bad);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn config_hash_tracks_settings() {
    let dir = tempfile::tempdir().unwrap();
    let (det, redet, _) = write_detection_fixtures(dir.path());
    let out_path = dir.path().join("g.json");
    let hash_of = |extra: &[&str]| {
        let mut args = vec![
            "build-graph",
            "--detections",
            det.to_str().unwrap(),
            "--redetections",
            redet.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let out = run(&args);
        assert_code(&out, 0);
        stdout(&out)
            .lines()
            .find(|l| l.starts_with("config_hash: "))
            .unwrap()
            .trim_start_matches("config_hash: ")
            .to_string()
    };
    let default = hash_of(&[]);
    let tweaked = hash_of(&["--confidence", "0.4"]);
    assert_eq!(default, hash_of(&[]));
    assert_ne!(default, tweaked);
}

#[test]
fn eval_rejects_mixed_modes_and_missing_files() {
    let out = run(&["eval"]);
    assert_code(&out, 2);
    let out = run(&["eval", "--tasks", "/nonexistent/t.jsonl", "--predictions", "/nonexistent/p.jsonl"]);
    assert_code(&out, 2);
}

#[test]
fn eval_vln_mode() {
    let dir = tempfile::tempdir().unwrap();
    let eps = dir.path().join("episodes.jsonl");
    // stops 2 m from goal over a 10 m shortest path, walked 10 m
    let line = serde_json::json!({
        "trajectory": [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]],
        "goal": [12.0, 0.0, 0.0],
        "shortest_path_length": 10.0
    });
    std::fs::write(&eps, line.to_string() + "\n").unwrap();
    let out = run(&["eval", "--episodes", eps.to_str().unwrap()]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("SR"), "missing VLN section:\n{text}");
}

#[test]
fn ssca_check_passes_and_rejects_bad_dims() {
    let out = run(&["ssca-check", "--dims", "4x8x2", "--seed", "3"]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("PASS: gate-zero identity"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");

    assert_code(&run(&["ssca-check", "--dims", "4x9x2"]), 2);
    assert_code(&run(&["ssca-check", "--dims", "banana"]), 2);
}

#[test]
fn ssca_self_test_reports_expected_failure() {
    let out = run(&["ssca-check", "--dims", "4x8x2", "--self-test"]);
    assert_code(&out, 0);
    assert!(stdout(&out).contains("failed as expected"));
}

#[test]
fn prompts_and_grid_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("prompts");
    let out = run(&["prompts", "--out-dir", out_dir.to_str().unwrap()]);
    assert_code(&out, 0);
    for f in ["system_prompt.txt", "text_appendix.txt", "visual_appendix.txt"] {
        assert!(out_dir.join(f).exists());
    }
    assert!(stdout(&out).contains("system_prompt: "));

    let erp = dir.path().join("pano.png");
    write_fixture_erp(&erp, 256, 128);
    let grid_out = dir.path().join("grid.png");
    let out = run(&["grid", "--erp", erp.to_str().unwrap(), "--out", grid_out.to_str().unwrap()]);
    assert_code(&out, 0);
    assert!(grid_out.exists());
    let first = stdout(&out);
    let out = run(&["grid", "--erp", erp.to_str().unwrap(), "--out", grid_out.to_str().unwrap()]);
    assert_eq!(first, stdout(&out), "grid rendering is not deterministic");
}

#[test]
fn help_exits_zero_and_unknown_flag_exits_two() {
    assert_code(&run(&["--help"]), 0);
    assert_code(&run(&["project", "--bogus"]), 2);
    assert_code(&run(&[]), 2);
}
