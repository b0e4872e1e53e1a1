use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use intent_grasp::dialogue::EpisodeResult;
use intent_grasp::world::load_dataset;
use serde_json::{json, Value};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intent-grasp")).args(args).output().unwrap()
}

fn write_json(dir: &Path, name: &str, v: Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr_lines(o: &Output) -> usize {
    String::from_utf8_lossy(&o.stderr).lines().count()
}

#[test]
fn bench_writes_report_and_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", json!({"num_scenes": 4, "policies": ["silent", "literal", "prograsp"], "grasp": false}));
    let out = dir.path().join("report.csv");
    let o = cli(&["bench", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("split,policy,lambda,T,acc_0.1,acc_0.5,acc_0.9,avg_interactions,upper_bound,grasp_success,n"));
    assert_eq!(lines.count(), 9);
    let episodes = std::fs::read_to_string(dir.path().join("report.episodes.jsonl")).unwrap();
    // An accuracy and an efficiency record per cell, scene and split.
    assert_eq!(episodes.lines().count(), 3 * 4 * 3 * 2);
    for line in episodes.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        serde_json::from_value::<EpisodeResult>(v.clone()).unwrap();
        assert!(v["run"] == "accuracy" || v["run"] == "efficiency");
    }

    let again = dir.path().join("again.csv");
    assert!(cli(&["bench", "--config", &cfg, "--out", again.to_str().unwrap(), "--seed", "5"]).status.success());
    assert_eq!(std::fs::read(&again).unwrap(), csv.as_bytes());
}

#[test]
fn sweep_covers_the_lambda_by_rounds_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", json!({"num_scenes": 3, "splits": ["seen"]}));
    let out = dir.path().join("sweep.json");
    let o = cli(&["sweep", "--config", &cfg, "--lambda", "0,0.5,0.9,1", "--rounds", "1,2,3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 12);
    let grid: BTreeSet<(String, u64)> =
        cells.iter().map(|c| (c["lambda"].to_string(), c["T"].as_u64().unwrap())).collect();
    let want: BTreeSet<(String, u64)> = ["0.0", "0.5", "0.9", "1.0"]
        .iter()
        .flat_map(|l| (1..=3).map(move |t| (l.to_string(), t)))
        .collect();
    assert_eq!(grid, want);
    assert!(cells.iter().all(|c| c["policy"] == "prograsp"));
}

#[test]
fn replay_transcript_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let ep = write_json(dir.path(), "e.json", json!({"generator": {"split": "seen", "seed": 11, "ambiguous": true}, "seed": 11}));
    let a = cli(&["replay", "--episode", &ep]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert!(text.contains("round 1\n  robot: Should I get the "), "{text}");
    assert!(text.contains("final ["), "{text}");
    assert_eq!(cli(&["replay", "--episode", &ep]).stdout, a.stdout);

    let scripted = write_json(
        dir.path(),
        "s.json",
        json!({
            "scene": {
                "id": "snack", "width": 640, "height": 480, "target_id": "o0", "table_z": 0.0, "clutter_mode": false,
                "objects": [
                    {"id": "o0", "category": "banana", "attributes": {"color": "yellow"}, "affordances": ["edible"], "box": [100.0, 120.0, 170.0, 210.0], "height_m": 0.05},
                    {"id": "o1", "category": "pen", "attributes": {"color": "blue"}, "affordances": ["writing"], "box": [400.0, 100.0, 460.0, 180.0], "height_m": 0.02}
                ]
            },
            "utterance": "I am hungry",
            "agent": {"epsilon_answer": 0.0, "p_corrective": 0.5, "grounder_jitter_px": 0.0, "distractor_rate": 0.0, "p_floor": 0.01},
            "answers": ["Yes"],
            "T": 1
        }),
    );
    let o = cli(&["replay", "--episode", &scripted]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("  robot: Should I get the banana?\n  human: Yes\n"), "{text}");
    assert!(text.ends_with("final [100.0, 120.0, 170.0, 210.0] after 1 rounds, IoU 1.000\n"), "{text}");
}

#[test]
fn gen_data_writes_loadable_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "g.json", json!({"num_records": 6}));
    let out = dir.path().join("records.json");
    let o = cli(&["gen-data", "--config", &cfg, "--seed", "2", "--rounds", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = load_dataset(&out).unwrap();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| (1..=2).contains(&r.qa_pairs.len())));
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["bench", "--frobnicate"]);
    assert!(!o.status.success());
    assert_eq!(stderr_lines(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = write_json(dir.path(), "c.json", json!({"num_scenes": 1, "grasp": false}));
    let o = cli(&["bench", "--config", &cfg, "--out", "/nonexistent-dir/report.csv"]);
    assert!(!o.status.success());
    assert_eq!(stderr_lines(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));

    let bad = write_json(dir.path(), "bad.json", json!({"num_scenes": 0}));
    let o = cli(&["bench", "--config", &bad]);
    assert!(!o.status.success());
    assert_eq!(stderr_lines(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));

    let o = cli(&["sweep", "--policy", "psychic"]);
    assert!(!o.status.success());
    assert_eq!(stderr_lines(&o), 1);

    let o = cli(&["replay", "--episode", dir.path().join("missing.json").to_str().unwrap()]);
    assert!(!o.status.success());
    assert_eq!(stderr_lines(&o), 1);
}
