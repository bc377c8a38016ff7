use nppx_core::plant::{Action, Feature, ACTION_COUNT};
use nppx_core::session::read_log;
use nppx_core::tree::{BranchNode, DecisionTree, LeafNode, Node};
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::TempDir;

struct Run {
    code: i32,
    status: Value,
    stderr: String,
}

fn nppx(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_nppx"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let last = stdout.lines().last().unwrap_or_else(|| panic!("no status line for {args:?}"));
    Run {
        code: out.status.code().unwrap(),
        status: serde_json::from_str(last).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let run = nppx(dir, args);
    assert_eq!(run.code, 0, "{args:?}: {}\n{}", run.status, run.stderr);
    assert_eq!(run.status["status"], "ok");
    run.status["result"].clone()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Files and directories under `dir`, relative, sorted.
fn listing(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
        for e in fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            out.push(path.strip_prefix(root).unwrap().display().to_string());
            if path.is_dir() {
                walk(root, &path, out);
            }
        }
    }
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn stump_tree(dir: &Path) -> PathBuf {
    let leaf = |a: Action| {
        let mut q = [0.0; ACTION_COUNT];
        q[a.index()] = 1.0;
        Node::Leaf(LeafNode::new(q, 1))
    };
    let root = Node::Branch(BranchNode {
        feature: Feature::Temperature.index(),
        threshold: 30.0,
        left: 1,
        right: 2,
        depth: 0,
    });
    let tree = DecisionTree::from_parts(vec![root, leaf(Action::SecurityDown), leaf(Action::Skip)], 0).unwrap();
    write(dir, "stump.json", &tree.to_document().to_json())
}

const SHORT: &str = "[session]\ntraining_duration_s = 120.0\nassessment_duration_s = 60.0\n";

#[test]
fn validate_config_layers_and_reports_paths() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "a.toml", "[train]\nepisodes = 10\nmax_steps = 50\n");
    write(d, "b.toml", "[train]\nepisodes = 20\n");
    let v = ok(d, &["validate-config", "--config", "a.toml", "--config", "b.toml", "--seed", "9"]);
    assert_eq!(v["config"]["train"]["episodes"], 20);
    assert_eq!(v["config"]["train"]["max_steps"], 50);
    assert_eq!(v["config"]["train"]["seed"], 9);

    write(d, "bad.toml", "[train]\nepisodez = 3\n");
    let run = nppx(d, &["validate-config", "--config", "bad.toml"]);
    assert_eq!(run.code, 2);
    assert_eq!(run.status["exit_code"], 2);
    assert!(run.status["error"].as_str().unwrap().contains("train.episodez"), "{}", run.status);

    write(d, "range.toml", "[policy]\np_why = 1.5\n");
    let run = nppx(d, &["validate-config", "--config", "range.toml"]);
    assert_eq!(run.code, 2);
    assert!(run.status["error"].as_str().unwrap().contains("policy.p_why"), "{}", run.status);

    let run = nppx(d, &["validate-config", "--config", "missing.toml"]);
    assert_eq!(run.code, 2);
}

#[test]
fn zero_episodes_train_a_single_leaf_with_a_warning() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "zero.toml", "[train]\nepisodes = 0\n");
    let run = nppx(d, &["train", "--config", "zero.toml", "--out", "model"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stderr.contains("warning"), "{}", run.stderr);
    assert_eq!(run.status["result"]["nodes"], 1);
    assert_eq!(listing(&d.join("model")), ["config.toml", "metrics.csv", "tree.json"]);
    // the effective config reloads to the same thing
    let again = ok(d, &["validate-config", "--config", "model/config.toml"]);
    let first = ok(d, &["validate-config", "--config", "zero.toml"]);
    assert_eq!(again, first);
    // header only
    assert_eq!(fs::read_to_string(d.join("model/metrics.csv")).unwrap().lines().count(), 1);
}

#[test]
fn failures_leave_no_output_behind() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "bad.toml", "[train\nepisodes = 0\n");
    let run = nppx(d, &["train", "--config", "bad.toml", "--out", "model"]);
    assert_eq!(run.code, 2);

    write(
        d,
        "hot.toml",
        "[train]\nepisodes = 0\n[plant.initial_state]\nfuel_rods = \"down\"\n[plant.anomaly_thresholds]\ntemp_max = 30.0\n",
    );
    let run = nppx(d, &["train", "--config", "hot.toml", "--out", "model"]);
    assert_eq!(run.code, 3, "{}", run.status);
    assert_eq!(run.status["command"], "train");

    let run = nppx(d, &["simulate", "--out", "logs", "--condition", "cxai"]);
    assert_eq!(run.code, 2, "{}", run.status);
    let run = nppx(d, &["simulate", "--out", "logs", "--condition", "self", "--policy", "psychic"]);
    assert_eq!(run.code, 2, "{}", run.status);

    assert_eq!(listing(d), ["bad.toml", "hot.toml"]);
}

#[test]
fn rollouts_are_seeded() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let a = ok(d, &["rollout", "--seed", "4", "--steps", "60"]);
    let b = ok(d, &["rollout", "--seed", "4", "--steps", "60"]);
    assert_eq!(a, b);
    assert_eq!(a["policy"], "random");
    assert_eq!(a["summary"]["steps"], 60);

    let tree = stump_tree(d);
    let g = ok(d, &["rollout", "--tree", tree.to_str().unwrap(), "--steps", "30", "--out", "trace"]);
    assert_eq!(g["policy"], "greedy");
    let lines = fs::read_to_string(d.join("trace/rollout.jsonl")).unwrap().lines().count();
    assert!(lines >= 30, "{lines}");
}

#[test]
fn simulate_then_analyze() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "short.toml", SHORT);
    let tree = stump_tree(d);
    let tree = tree.to_str().unwrap();
    let args = |out: &'static str| {
        vec![
            "simulate", "--config", "short.toml", "--tree", tree, "--out", out, "--condition", "cxai,axai,self",
            "--fleet-size", "3", "--seed", "11",
        ]
    };
    let first = ok(d, &args("run1"));
    let second = ok(d, &args("run2"));
    assert_eq!(first["fleets"], second["fleets"]);
    assert_eq!(first["policy"], "self_anchored");
    assert_eq!(listing(&d.join("run1")), listing(&d.join("run2")));
    for name in listing(&d.join("run1")).iter().filter(|n| n.ends_with(".jsonl")) {
        let a = fs::read(d.join("run1").join(name)).unwrap();
        let b = fs::read(d.join("run2").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    for entry in fs::read_dir(d.join("run1/self_taught")).unwrap() {
        let log = read_log(&entry.unwrap().path()).unwrap();
        assert!(!log.records.is_empty());
        assert!(log.records.iter().all(|r| !r.asked_what && !r.asked_why));
    }

    // a second run into the same place is refused and changes nothing
    let before = fs::read(d.join("run1/cxai/cxai-0000.jsonl")).unwrap();
    let run = nppx(d, &args("run1"));
    assert_eq!(run.code, 2, "{}", run.status);
    assert_eq!(fs::read(d.join("run1/cxai/cxai-0000.jsonl")).unwrap(), before);

    let report = ok(d, &["analyze", "run1", "--out", "report"]);
    assert_eq!(report["sessions"], 9);
    let groups: Vec<&str> = report["groups"].as_array().unwrap().iter().map(|g| g.as_str().unwrap()).collect();
    assert_eq!(groups.len(), 3);
    assert_eq!(
        listing(&d.join("report")),
        [
            "explanandum.csv",
            "groups.csv",
            "move_types.csv",
            "report.json",
            "sessions.csv",
            "slices.csv"
        ]
    );
    let json: Value = serde_json::from_str(&fs::read_to_string(d.join("report/report.json")).unwrap()).unwrap();
    assert_eq!(json["sessions"].as_array().unwrap().len(), 9);
    assert_eq!(fs::read_to_string(d.join("report/sessions.csv")).unwrap().lines().count(), 10);

    // a single group still reports, without between-group tests
    let single = ok(d, &["analyze", "run1/cxai", "--out", "single", "--group-by", "dir"]);
    assert_eq!(single["sessions"], 3);
    assert_eq!(single["tests"].as_array().map_or(0, Vec::len), 0);

    fs::create_dir(d.join("one")).unwrap();
    fs::copy(d.join("run1/axai/axai-0001.jsonl"), d.join("one/axai-0001.jsonl")).unwrap();
    let one = ok(d, &["analyze", "one", "--out", "one_report"]);
    assert_eq!(one["sessions"], 1);
    assert_eq!(one["groups"], serde_json::json!(["axai"]));

    // the same analysis twice gives the same tables
    ok(d, &["analyze", "run1", "--out", "report2"]);
    for name in listing(&d.join("report")) {
        assert_eq!(
            fs::read(d.join("report").join(&name)).unwrap(),
            fs::read(d.join("report2").join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn analyze_refuses_bad_inputs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "short.toml", SHORT);
    ok(d, &["simulate", "--config", "short.toml", "--out", "logs", "--condition", "self", "--fleet-size", "2"]);

    fs::create_dir(d.join("empty")).unwrap();
    let run = nppx(d, &["analyze", "empty", "--out", "r1"]);
    assert_eq!(run.code, 2, "{}", run.status);

    // a log written under another schema version must not be mixed in
    let src = d.join("logs/self_taught/self_taught-0000.jsonl");
    let text = fs::read_to_string(&src).unwrap();
    let (head, rest) = text.split_once('\n').unwrap();
    let mut header: Value = serde_json::from_str(head).unwrap();
    header["schema_version"] = 2.into();
    fs::create_dir(d.join("old")).unwrap();
    write(&d.join("old"), "old.jsonl", &format!("{header}\n{rest}"));
    let run = nppx(d, &["analyze", "logs", "old", "--out", "r2"]);
    assert_eq!(run.code, 2, "{}", run.status);

    write(&d.join("old"), "old.jsonl", "not json\n");
    let run = nppx(d, &["analyze", "old", "--out", "r3"]);
    assert_eq!(run.code, 2, "{}", run.status);

    assert!(!d.join("r1").exists() && !d.join("r2").exists() && !d.join("r3").exists());
}
