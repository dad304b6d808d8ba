//! End-to-end runs of the `recompose` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn recompose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recompose"))
        .args(args)
        .env_remove("RECOMPOSE_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Synthetic workspace with the given number of queries; returns the
/// temp dir and its config path.
fn workspace(queries: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let out = recompose(&[
        "synth",
        "--out",
        ws.to_str().unwrap(),
        "--seed",
        "5",
        "--queries",
        &queries.to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cfg = ws.join("config.json");
    assert_eq!(stdout(&out).trim(), cfg.to_str().unwrap());
    (dir, cfg)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dump_config_shows_defaults() {
    let out = recompose(&["-q", "dump-config"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["lambda"], 0.7);
    assert_eq!(v["alpha"], 0.5);
    assert_eq!(v["beta"], 0.5);
    assert_eq!(v["gamma"], 0.03);
    assert_eq!(v["k_sim"], 17);
    assert_eq!(v["k_cov"], 3);
    assert_eq!(v["total_demos"], 20);
}

#[test]
fn overrides_apply_and_are_validated() {
    let out = recompose(&["-q", "dump-config", "--alpha", "1.0", "--k-cov", "0"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["alpha"], 1.0);
    assert_eq!(v["total_demos"], 17);

    let out = recompose(&["-q", "dump-config", "--alpha", "1.5"]);
    assert_eq!(code(&out), 3);
    let out = recompose(&["-q", "dump-config", "--k-cov", "2", "--total-demos", "20"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("total_demos"));
}

#[test]
fn missing_config_names_the_path() {
    let out = recompose(&["validate", "--config", "/nonexistent/recompose.json"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("/nonexistent/recompose.json"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"lamda": 0.5}"#).unwrap();
    let out = recompose(&["validate", "--config", s(&cfg)]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("lamda"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&recompose(&["frobnicate"])), 2);
    assert_eq!(code(&recompose(&["eval"])), 2);
}

#[test]
fn validate_accepts_and_rejects() {
    let (_dir, cfg) = workspace(1);
    let out = recompose(&["-q", "validate", "--config", s(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("library: 30 demos, valid"));
    assert!(stdout(&out).contains("static library:"));

    let demo = cfg.parent().unwrap().join("library/demos/pick_cup-00.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&demo).unwrap()).unwrap();
    v["actions"][0][0] = json!(100);
    fs::write(&demo, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let out = recompose(&["-q", "validate", "--config", s(&cfg)]);
    assert_eq!(code(&out), 6);
    assert!(stderr(&out).contains("pick_cup-00"));

    let out = recompose(&["-q", "validate", "--library", "/nonexistent/lib"]);
    assert_eq!(code(&out), 4);
}

fn tsv(text: &str) -> Vec<(String, Vec<f64>)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split('\t');
            let id = f.next().unwrap().to_string();
            (id, f.map(|x| x.parse().unwrap()).collect())
        })
        .collect()
}

#[test]
fn retrieve_alpha_one_is_pure_visual() {
    let (_dir, cfg) = workspace(1);
    let q = cfg.parent().unwrap().join("queries/q000.json");
    let args = [
        "-q",
        "retrieve",
        "--config",
        s(&cfg),
        "--instruction",
        "turn the valve",
        "--embedding",
        s(&q),
        "--plan",
        "Reach[valve] -> Grasp[valve] -> Rotate[valve] -> Release[valve]",
        "--alpha",
        "1.0",
        "--all",
    ];
    let out = recompose(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("demo_id\ts_vis\ts_vis_norm\ts_plan\tfused\n"));
    let rows = tsv(&text);
    assert_eq!(rows.len(), 30);
    for w in rows.windows(2) {
        assert!(w[0].1[0] >= w[1].1[0], "not sorted by s_vis: {:?} {:?}", w[0], w[1]);
    }
    for (_, r) in &rows {
        assert_eq!(r[3], r[1]);
    }

    let top = recompose(&args[..args.len() - 1]);
    assert_eq!(tsv(&stdout(&top)).len(), 17);
}

#[test]
fn infer_writes_result_and_exact_prompt() {
    let (dir, cfg) = workspace(3);
    let prompt = dir.path().join("prompt.txt");
    let query = cfg.parent().unwrap().join("q000.json");
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(cfg.parent().unwrap().join("queries.json")).unwrap())
            .unwrap();
    fs::write(&query, manifest["queries"][0].to_string()).unwrap();
    let out =
        recompose(&["-q", "infer", "--config", s(&cfg), "--query", s(&query), "--dump-prompt", s(&prompt)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(r["dynamic"].as_array().unwrap().len(), 17);
    let coverage = r["coverage_ids"].as_array().unwrap().len();
    assert!(coverage >= 1);
    assert_eq!(r["actions"], manifest["queries"][0]["oracle_actions"]);
    let text = fs::read_to_string(&prompt).unwrap();
    assert_eq!(text.matches("\n---\n").count(), 17 + coverage);
    assert!(text.contains(manifest["queries"][0]["instruction"].as_str().unwrap()));

    let again = recompose(&["-q", "infer", "--config", s(&cfg), "--query", s(&query)]);
    assert_eq!(stdout(&again), stdout(&out));
}

#[test]
fn infer_provider_failure_exit_code() {
    let (_dir, cfg) = workspace(1);
    let ws = cfg.parent().unwrap();
    let out = recompose(&[
        "-q",
        "infer",
        "--config",
        s(&cfg),
        "--instruction",
        "nobody scripted this",
        "--embedding",
        s(&ws.join("queries/q000.json")),
    ]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));
    assert!(stderr(&out).contains("phase"));
}

#[test]
fn eval_synthetic_closes_the_loop() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("report");
    let out = recompose(&["-q", "eval", "--synthetic", "5", "--seed", "9", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("exact 5/5"));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["exact_matches"], 5);
    assert!(out_dir.join("report.txt").exists());
    assert!(out_dir.join("results/q004.json").exists());

    let again = tempfile::tempdir().unwrap();
    let out2 = recompose(&["-q", "eval", "--synthetic", "5", "--seed", "9", "--out", s(again.path())]);
    let strip = |p: &Path| {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
        for q in v["queries"].as_array_mut().unwrap() {
            q.as_object_mut().unwrap().remove("timings");
        }
        v
    };
    assert_eq!(code(&out2), 0);
    assert_eq!(strip(&out_dir), strip(again.path()));
}

#[test]
fn eval_partial_failure_and_empty_manifest() {
    let (dir, cfg) = workspace(5);
    let ws = cfg.parent().unwrap();
    fs::remove_file(ws.join("queries/q002.json")).unwrap();
    let out_dir = dir.path().join("report");
    let out = recompose(&[
        "-q",
        "eval",
        "--config",
        s(&cfg),
        "--manifest",
        s(&ws.join("queries.json")),
        "--out",
        s(&out_dir),
        "--parallelism",
        "2",
    ]);
    assert_eq!(code(&out), 7, "{}", stderr(&out));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["succeeded"], 4);
    assert_eq!(report["summary"]["failed"], 1);
    assert_eq!(report["queries"][2]["failed_phase"], "retrieve");

    let empty = ws.join("empty.json");
    fs::write(&empty, r#"{"queries": []}"#).unwrap();
    let out = recompose(&["-q", "eval", "--config", s(&cfg), "--manifest", s(&empty), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("queries 0"));
}

#[test]
fn build_static_with_budget() {
    let (dir, cfg) = workspace(1);
    let st = dir.path().join("st.json");
    let out = recompose(&["-q", "build-static", "--config", s(&cfg), "--budget", "2", "--out", s(&st)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert!(lines[0].starts_with("selected 2 of 30 demos"));
    assert_eq!(lines.len(), 3);
    let v: Value = serde_json::from_str(&fs::read_to_string(&st).unwrap()).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 2);
    assert_eq!(v["log_base"], "e");
}

#[test]
fn stats_lists_verbs() {
    let (_dir, cfg) = workspace(1);
    let out = recompose(&["-q", "stats", "--config", s(&cfg)]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.starts_with("demos\t30\n"));
    assert!(text.contains("verb\tRotate\t"));
}

fn frame(step: u64, gripper: u8, z: f64) -> Value {
    json!({
        "step": step,
        "joint_velocities": [0.5],
        "gripper_state": gripper,
        "pose": {"position": [0.0, 0.105, z], "orientation": [1.0, 0.0, 0.0, 0.0]},
        "timestamp": step as f64,
        "image_ref": format!("img/{step}.png"),
    })
}

#[test]
fn collect_builds_a_valid_library() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    fs::create_dir_all(raw.join("episodes")).unwrap();
    fs::create_dir_all(raw.join("img")).unwrap();
    for step in 0..10 {
        fs::write(raw.join(format!("img/{step}.png")), b"\x89PNG\r\n\x1a\n").unwrap();
    }
    for (i, task) in ["pick", "lift"].iter().enumerate() {
        let frames: Vec<Value> = (0..10)
            .map(|s| frame(s, if (3..7).contains(&s) { 0 } else { 1 }, 0.1 * s as f64 + 0.005))
            .collect();
        let ep = json!({
            "id": format!("ep{i}"),
            "task_name": task,
            "instruction": format!("{task} the cup"),
            "objects": {"cup": [50, 60, 10], "table": [50, 50, 0]},
            "movable_objects": ["cup"],
            "frames": frames,
            "embedding": [1.0, i as f64],
        });
        fs::write(raw.join(format!("episodes/ep{i}.json")), ep.to_string()).unwrap();
    }
    let script = json!({
        "rules": [
            {"contains": "Gripper: open -> closed", "reply": "Grasp[cup]"},
            {"contains": "Gripper: closed -> open", "reply": "Release[CUP]"},
        ],
        "default": "I think the robot lifts the cup",
    });
    fs::write(dir.path().join("annotator.json"), script.to_string()).unwrap();
    let cfg =
        json!({"providers": {"annotator": {"provider": "mock:annotator.json"}}, "paths": {"library": "lib"}});
    let cfg_path = dir.path().join("config.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();

    let out =
        recompose(&["-q", "collect", "--config", s(&cfg_path), "--raw", s(&raw), "--created", "2026-10-16"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("wrote 2 demos (6 segments"));
    let demo: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("lib/demos/ep0.json")).unwrap()).unwrap();
    let skills: Vec<&str> = demo["skills"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(skills, ["Grasp[cup]", "Release[cup]", "Move[cup]"]);
    assert!(dir.path().join("lib/images/ep0/3.png").exists());

    let out = recompose(&["-q", "validate", "--config", s(&cfg_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}
