use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_synthplan"));
    c.env_remove("RETROGRAPH_SEED");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn plan_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("plan.json")).unwrap()).unwrap()
}

#[test]
fn inventory_target_succeeds_without_iterations() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t.txt", "2\n");
    let o = run(&["plan", "--targets", "t.txt", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = plan_json(&tmp.path().join("o"));
    assert_eq!(v[0]["iterations"], 0);
    assert_eq!(v[0]["targets"][0]["success"], true);
}

#[test]
fn zero_budget_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t.txt", "12\n");
    let o = run(&["plan", "--targets", "t.txt", "--budget", "0", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn missing_files_and_bad_values_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t.txt", "12\n");
    for args in [
        vec!["plan", "--targets", "nope.txt"],
        vec!["plan", "--targets", "t.txt", "--mode", "forest"],
        vec!["plan", "--targets", "t.txt", "--cost", "gnn"],
        vec!["plan", "--targets", "t.txt", "--domain", "missing.jsonl"],
        vec!["batch-plan", "--targets", "t.txt", "--clusters", "3"],
        vec!["plan"],
    ] {
        let o = run(&args, tmp.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    write(tmp.path(), "bad.txt", "12\nx1\n");
    let o = run(&["plan", "--targets", "bad.txt"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.txt:2"));
}

#[test]
fn unsolvable_target_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    // 97 is prime, so the factor domain has no reaction for it.
    write(tmp.path(), "t.txt", "12\n97\n");
    let o = run(&["plan", "--targets", "t.txt", "--budget", "50", "--k", "10"], tmp.path());
    assert_eq!(code(&o), 1);
    let v = plan_json(&tmp.path().join("out"));
    assert_eq!(v[0]["targets"][0]["success"], true);
    assert_eq!(v[1]["targets"][0]["success"], false);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t.txt", "12\n");
    write(tmp.path(), "c.json", r#"{"targets": "t.txt", "budget": 5, "k": 3, "out": "o"}"#);
    let o = run(&["plan", "--config", "c.json", "--budget", "7"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = plan_json(&tmp.path().join("o"));
    assert_eq!(v[0]["budget"], 7);
    assert_eq!(v[0]["k"], 3);
    write(tmp.path(), "typo.json", r#"{"budgett": 5}"#);
    assert_eq!(code(&run(&["plan", "--config", "typo.json"], tmp.path())), 2);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t.txt", "60\n84\n");
    let base = ["plan", "--targets", "t.txt", "--budget", "20", "--k", "5"];
    let flag = run(&[&base[..], &["--seed", "5", "--out", "a"]].concat(), tmp.path());
    let env = bin().args(base).args(["--out", "b"]).env("RETROGRAPH_SEED", "5").current_dir(tmp.path()).output().unwrap();
    let other = run(&[&base[..], &["--seed", "6", "--out", "c"]].concat(), tmp.path());
    assert!(flag.status.code().is_some() && env.status.code().is_some() && other.status.code().is_some());
    let read = |d: &str| fs::read(tmp.path().join(d).join("plan.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let bad = bin().args(base).env("RETROGRAPH_SEED", "abc").current_dir(tmp.path()).output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn single_target_batches_match_plain_planning() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t.txt", "12\n30\n45\n");
    let args = ["--targets", "t.txt", "--budget", "20", "--k", "5"];
    run(&[&["plan"][..], &args, &["--out", "p"]].concat(), tmp.path());
    let o = run(&[&["batch-plan"][..], &args, &["--out", "b", "--batch-size", "1"]].concat(), tmp.path());
    assert!(code(&o) <= 1);
    let plans = plan_json(&tmp.path().join("p"));
    let batches: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("b/batch_plan.json")).unwrap()).unwrap();
    let from_batches: Vec<_> = batches.as_array().unwrap().iter().map(|b| b["result"].clone()).collect();
    assert_eq!(plans.as_array().unwrap(), &from_batches);
    assert_eq!(fs::read(tmp.path().join("p/trace.csv")).unwrap(), fs::read(tmp.path().join("b/trace.csv")).unwrap());
}

#[test]
fn empty_target_list_gives_an_empty_dataset() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t.txt", "# nothing\n");
    let o = run(&["gen-data", "--targets", "t.txt"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("out/dataset.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["examples"], 0);
}

const SMALL_MODEL: &str = r#"{
    "budget": 15, "k": 5, "feature_bits": 64, "rbf_size": 4, "layers": 1,
    "epochs": 3, "train_batch": 4, "val_size": 2, "limits": [5, 10, 15]
}"#;

/// Runs one command with the small-model config into `out`.
fn small(tmp: &Path, out: &str, args: &[&str]) -> Output {
    let o = bin()
        .args(args)
        .args(["--config", "small.json", "--targets", "t.txt", "--out", out])
        .current_dir(tmp)
        .output()
        .unwrap();
    assert!(code(&o) <= 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn same_files(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn every_command_is_byte_identical_on_rerun() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    write(p, "small.json", SMALL_MODEL);
    write(p, "t.txt", "12\n18\n20\n28\n30\n36\n");
    for run_dir in ["r1", "r2"] {
        let d = |name: &str| format!("{run_dir}/{name}");
        small(p, &d("plan"), &["plan"]);
        small(p, &d("batch"), &["batch-plan", "--batch-size", "2", "--clusters", "2"]);
        small(p, &d("data"), &["gen-data"]);
        small(p, &d("gnn"), &["train", "--model", "gnn", "--data", &d("data/dataset.jsonl")]);
        small(p, &d("value"), &["train", "--model", "value"]);
        small(p, &d("eval"), &["eval", "--cost", "gnn", "--checkpoint", &d("gnn/gnn.weights")]);
        small(p, &d("veval"), &["eval", "--cost", "value", "--checkpoint", &d("value/value.weights")]);
        small(p, &d("study"), &["study-redundancy"]);
    }
    for sub in ["plan", "batch", "data", "gnn", "value", "eval", "veval", "study"] {
        same_files(&p.join("r1").join(sub), &p.join("r2").join(sub));
    }
    let log = fs::read_to_string(p.join("r1/gnn/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    let wrong = bin()
        .args(["eval", "--config", "small.json", "--targets", "t.txt", "--cost", "value"])
        .args(["--checkpoint", "r1/gnn/gnn.weights"])
        .current_dir(p)
        .output()
        .unwrap();
    assert_eq!(code(&wrong), 2);
}

#[test]
fn table_domains_need_an_inventory() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "d.jsonl", r#"{"product": "A", "reactants": ["B"], "cost": 1.0}"#);
    write(tmp.path(), "t.txt", "A\n");
    write(tmp.path(), "inv.txt", "B\n");
    let o = run(&["plan", "--domain", "d.jsonl", "--targets", "t.txt"], tmp.path());
    assert_eq!(code(&o), 2);
    let o = run(&["plan", "--domain", "d.jsonl", "--targets", "t.txt", "--inventory", "inv.txt"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = plan_json(&tmp.path().join("out"));
    assert_eq!(v[0]["targets"][0]["route_length"], 1);
}
