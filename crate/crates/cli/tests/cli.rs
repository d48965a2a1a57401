use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rave_core::dm::DEFAULT_POLICY_TOML;
use tempfile::TempDir;

fn rave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rave"))
        .args(args)
        .env_remove("RAVE_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// The JSON error line on stderr.
fn error_line(o: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().find(|l| l.starts_with("{\"error\"")).expect("machine-readable error line");
    serde_json::from_str(line).unwrap()
}

fn without_outside_rules(policy: &str) -> String {
    let mut blocks = policy.split("[[rule]]");
    let head = blocks.next().unwrap().to_string();
    blocks
        .filter(|b| !b.contains("aoi = [\"Outside\"]"))
        .fold(head, |acc, b| acc + "[[rule]]" + b)
}

#[test]
fn check_policy_shipped_is_total() {
    let o = rave(&["check-policy"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("checked 480 combinations (460 baseline + 20 absent): 480 covered, 0 uncovered"));
}

#[test]
fn check_policy_outside_branch_deleted_fails_validation() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("policy.toml");
    fs::write(&path, without_outside_rules(DEFAULT_POLICY_TOML)).unwrap();
    let o = rave(&["check-policy", "--policy", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("uncovered: Outside"));
    assert_eq!(error_line(&o)["error"]["code"], "PolicyIncomplete");
}

#[test]
fn check_policy_empty_file_is_parse_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("empty.toml");
    fs::write(&path, "").unwrap();
    let o = rave(&["check-policy", "--policy", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"]["code"], "PolicyParse");
}

#[test]
fn run_cooperative_then_replay() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = rave(&["run", "--scenario", "builtin:cooperative", "--trace", trace.to_str().unwrap(), "--fast"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let rhymes: u32 = out
        .split("NurseryRhyme=")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|n| n.parse().ok())
        .unwrap();
    assert!(rhymes >= 1);
    assert!(out.contains("interrupts handled="));

    let o = rave(&["replay", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("replay matches"));

    let o = rave(&["replay", "--trace", trace.to_str().unwrap(), "--render"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let records = text.lines().count() - 1;
    let lines = fs::read_to_string(&trace).unwrap().lines().count() - 1;
    assert_eq!(records, lines);
}

fn run_to(dir: &Path, scenario: &str) -> std::path::PathBuf {
    let trace = dir.join("t.jsonl");
    let o = rave(&["run", "--scenario", scenario, "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    trace
}

#[test]
fn tampered_trace_reports_divergence_index() {
    let dir = TempDir::new().unwrap();
    let trace = run_to(dir.path(), "builtin:fussy");
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let (i, line) = lines
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| l.contains("\"dm.command.avatar\"") && l.contains("\"Execute\""))
        .nth(3)
        .map(|(i, l)| (i, l.clone()))
        .unwrap();
    let behavior = serde_json::from_str::<serde_json::Value>(&line).unwrap()["payload"]["body"]["behavior"]
        .as_str()
        .unwrap()
        .to_string();
    lines[i] = line.replace(&format!("\"behavior\":\"{behavior}\""), "\"behavior\":\"Hello\"");
    assert_ne!(lines[i], line);
    fs::write(&trace, lines.join("\n") + "\n").unwrap();

    let o = rave(&["replay", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = error_line(&o);
    assert_eq!(err["error"]["code"], "DivergenceAt");
    // Record indices count from the first record after the header line.
    assert!(err["error"]["message"].as_str().unwrap().starts_with(&format!("record {}:", i - 1)));
}

#[test]
fn run_with_uncovered_policy_exits_2_and_lists_combinations() {
    let dir = TempDir::new().unwrap();
    let policy = dir.path().join("policy.toml");
    fs::write(&policy, without_outside_rules(DEFAULT_POLICY_TOML)).unwrap();
    let o = rave(&[
        "run",
        "--scenario",
        "builtin:fussy",
        "--policy",
        policy.to_str().unwrap(),
        "--trace",
        dir.path().join("t.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = error_line(&o);
    assert_eq!(err["error"]["code"], "PolicyIncomplete");
    assert!(err["error"]["message"].as_str().unwrap().contains("(Outside, VeryNegative, absent)"));
}

#[test]
fn invalid_scenario_reports_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "schema = 1\nname = \"x\"\nseed = \"one\"\n").unwrap();
    let o = rave(&["run", "--scenario", path.to_str().unwrap(), "--trace", dir.path().join("t").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = error_line(&o);
    assert_eq!(err["error"]["code"], "InvalidScenario");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 3"));
}

#[test]
fn missing_files_and_env_overrides() {
    let dir = TempDir::new().unwrap();
    let o = rave(&["run", "--scenario", "/definitely/missing.toml", "--trace", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"]["code"], "MissingFile");

    let trace = dir.path().join("t.jsonl");
    let o = Command::new(env!("CARGO_BIN_EXE_rave"))
        .args(["run", "--scenario", "builtin:distracted", "--trace", trace.to_str().unwrap()])
        .env("RAVE_DM_IDLE_TIMEOUT_MS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"]["code"], "InvalidConfig");

    let o = Command::new(env!("CARGO_BIN_EXE_rave"))
        .args(["run", "--scenario", "builtin:distracted", "--trace", trace.to_str().unwrap()])
        .env("RAVE_DM_IDLE_TIMEOUT_MS", "4000")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let header: serde_json::Value =
        serde_json::from_str(fs::read_to_string(&trace).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["config"]["dm"]["idle_timeout_ms"], 4000);
}

#[test]
fn seed_override_changes_the_trace() {
    let dir = TempDir::new().unwrap();
    let hash = |seed: &str| {
        let trace = dir.path().join(format!("{seed}.jsonl"));
        let o = rave(&["run", "--scenario", "builtin:distracted", "--seed", seed, "--trace", trace.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        stdout(&o).lines().find(|l| l.starts_with("trace ")).unwrap().rsplit(' ').next().unwrap().to_string()
    };
    assert_eq!(hash("1"), hash("1"));
    assert_ne!(hash("1"), hash("2"));
}
