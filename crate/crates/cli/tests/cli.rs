use std::process::{Command, Output};

fn tb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tb"))
        .args(args)
        .env_remove("TB_SEED")
        .output()
        .expect("run tb")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn summary(report: &str) -> serde_json::Value {
    serde_json::from_str(report.lines().last().unwrap()).unwrap()
}

#[test]
fn check_writes_a_file_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.jsonl");
    let o = tb(&["check", "--report", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let s = summary(&text);
    assert_eq!(s["summary"], true);
    assert_eq!(s["failed"], 0);
    assert_eq!(s["seed"], 42);
}

#[test]
fn check_is_deterministic() {
    let a = tb(&["check", "--seed", "9", "--dtype", "f32"]);
    let b = tb(&["check", "--seed", "9", "--dtype", "f32"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_tb"))
        .args(["check", "--ops", "add"])
        .env("TB_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(summary(&stdout(&o))["seed"], 1234);
    let o = Command::new(env!("CARGO_BIN_EXE_tb"))
        .args(["check", "--ops", "add", "--seed", "5"])
        .env("TB_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(summary(&stdout(&o))["seed"], 5);
}

#[test]
fn ops_and_backends_filter_records() {
    let o = tb(&["check", "--ops", "square", "--backends", "plain,tape"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let records: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .filter(|v: &serde_json::Value| v["summary"] != true)
        .collect();
    assert!(!records.is_empty());
    for r in records.iter().filter(|r| !r["op"].as_str().unwrap().starts_with("grad:")) {
        assert_eq!(r["op"], "square");
        assert_eq!((r["a"].as_str().unwrap(), r["b"].as_str().unwrap()), ("plain", "tape"));
    }
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["check", "--backends", "plain"][..],
        &["check", "--backends", "plain,numpy"],
        &["check", "--ops", "frobnicate"],
        &["check", "--dtype", "f16"],
        &["check", "-s", "1"],
        &["demo", "norm", "[[1,2],[3,"],
        &["demo", "grad", "[[1,2],[3]]"],
        &["nonsense"],
    ] {
        assert_eq!(tb(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn demo_norm_of_zero() {
    let o = tb(&["demo", "norm", "[0]"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().all(|l| l.ends_with(": 0")));
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn demo_grad_of_zero() {
    let o = tb(&["demo", "grad", "[0]"]);
    assert_eq!(
        stdout(&o),
        "imperative: value=0 grad=[0]\ntape: value=0 grad=[0]\nfunctional: value=0 grad=[0]\n"
    );
}

#[test]
fn demo_grad_on_plain_fails() {
    let o = tb(&["demo", "grad", "--backends", "plain", "[1,2,3]"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NoAutodiffCapability"));
}

#[test]
fn list_ops_table() {
    let a = tb(&["list-ops"]);
    let b = tb(&["list-ops"]);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), tensorbridge::OpKind::ALL.len());
    let argmax = rows.iter().find(|r| r[0] == "argmax").unwrap();
    assert_eq!(argmax[2], "false");
    let add = rows.iter().find(|r| r[0] == "add").unwrap();
    assert_eq!((add[1], add[2]), ("2", "true"));
}
