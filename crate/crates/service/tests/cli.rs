use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zeittafel"))
}

fn safari() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/web_safari.json")
}

fn with_stdin(cmd: &mut Command, input: &str) -> Output {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn malformed_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(safari()).unwrap()).unwrap();
    s["offers"][4]["estimate"]["optimistic"] = serde_json::json!(500.0);
    std::fs::write(&path, s.to_string()).unwrap();
    let out = bin()
        .arg("plan")
        .arg("--scenario")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offers[4]"));

    let out = bin()
        .args(["plan", "--deadline", "-3", "--scenario"])
        .arg(safari())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn interactive_withdrawal_from_stdin() {
    let out = with_stdin(
        bin()
            .args(["plan", "--deadline", "380", "--scenario"])
            .arg(safari()),
        "C4\n",
    );
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("duration 325"), "{stdout}");
    assert!(stdout.contains("withdrawn: C4"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("withdraw which categories?"));

    let out = with_stdin(
        bin()
            .args(["plan", "--deadline", "380", "--scenario"])
            .arg(safari()),
        "\n",
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn compose_appends_itinerary() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = bin()
        .args(["plan", "--non-interactive", "--compose", "--report"])
        .arg(&report)
        .arg("--scenario")
        .arg(safari())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["itinerary"]["records"].as_array().unwrap().len(), 6);

    let out = bin()
        .args([
            "plan",
            "--non-interactive",
            "--compose",
            "--fail-service",
            "C4-WS3",
        ])
        .arg("--scenario")
        .arg(safari())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let out = bin()
        .args([
            "bench",
            "--trials",
            "5",
            "--seed",
            "3",
            "--modes",
            "none,permutations",
            "--out",
        ])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("trial,mode,success,orders_tried,wall_us,probability")
    );
    assert_eq!(text.lines().count(), 11);
    assert!(String::from_utf8_lossy(&out.stdout).contains("all_permutations"));

    let out = bin()
        .args(["bench", "--block-prob", "1.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
