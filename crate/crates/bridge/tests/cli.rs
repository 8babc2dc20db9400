use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn eeroot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eeroot")).args(args).output().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &[][..],
        &["fly"],
        &["simulate"],
        &["eval", "system", "--category", "juggling"],
        &["plan", "--map", "m.txt", "--start", "1,2", "--goal", "0,0,0"],
        &["eval", "system", "--category", "simple-nav", "--backend", "oracle"],
    ] {
        assert_eq!(eeroot(args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(eeroot(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1() {
    let map = fixture("wall_gap.txt");
    let map = map.to_str().unwrap();
    let out = eeroot(&["plan", "--map", "/nonexistent/map.txt", "--start", "0.6,1.9,0", "--goal", "3.4,1.9,0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("/nonexistent/map.txt"));
    // inside the wall
    let out = eeroot(&["plan", "--map", map, "--start", "2.0,2.3,0", "--goal", "3.4,1.9,0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = eeroot(&["simulate", "--ticks", "5", "--scenario", map]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_ticks_is_an_empty_recording() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("out.jsonl");
    let out = eeroot(&["simulate", "--seed", "3", "--ticks", "0", "--record", rec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(std::fs::read(&rec).unwrap(), b"");
}

#[test]
fn simulate_replays_a_command_log_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let log = fixture("commands.jsonl");
    let run = |name: &str| {
        let rec = dir.path().join(name);
        let out = eeroot(&["simulate", "--seed", "7", "--ticks", "800", "--commands", log.to_str().unwrap(), "--record", rec.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        std::fs::read(rec).unwrap()
    };
    let (a, b) = (run("a.jsonl"), run("b.jsonl"));
    assert_eq!(a, b);
    let lines: Vec<Value> = text(&a).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 320);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["type"], "state");
        assert_eq!(l["v"], 1);
        assert_eq!(l["seq"], i as u64 + 1);
    }
    // the logged commands took effect
    assert!(lines.iter().any(|l| l["teleop"] == "mirrored"));
    assert!(lines.iter().any(|l| l["active_skill"] == "move_to"));
    let c = run("c.jsonl");
    let other = {
        let rec = dir.path().join("d.jsonl");
        eeroot(&["simulate", "--seed", "8", "--ticks", "800", "--commands", log.to_str().unwrap(), "--record", rec.to_str().unwrap()]);
        std::fs::read(rec).unwrap()
    };
    assert_eq!(a, c);
    assert_ne!(a, other);
}

#[test]
fn plan_output_matches_the_golden_file() {
    let map = fixture("wall_gap.txt");
    let out = eeroot(&["plan", "--map", map.to_str().unwrap(), "--start", "0.6,1.9,0", "--goal", "3.4,1.9,0"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/plan_wall_gap.json");
    if std::env::var_os("EEROOT_BLESS").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &out.stdout).unwrap();
    }
    assert_eq!(text(&out.stdout), std::fs::read_to_string(&golden).unwrap());
    let path: Value = serde_json::from_slice(&out.stdout).unwrap();
    let wps = path["waypoints"].as_array().unwrap();
    let last = wps.last().unwrap();
    assert!((last["x"].as_f64().unwrap() - 3.4).hypot(last["y"].as_f64().unwrap() - 1.9) <= 0.1);
    // the wall forces the route down through the gap
    assert!(wps.iter().any(|w| w["y"].as_f64().unwrap() < 1.0));
}

#[test]
fn plan_accepts_a_scenario_as_map() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scenario.json");
    std::fs::write(&spec, r#"{"seed": 4}"#).unwrap();
    let out = eeroot(&["plan", "--map", spec.to_str().unwrap(), "--start", "0,0,0", "--goal", "0,-1.5,-1.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
}

#[test]
fn simple_nav_scores_five_of_five() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("nav.json");
    let out = eeroot(&["eval", "system", "--category", "simple-nav", "--trials", "5", "--seed", "0", "--backend", "scripted", "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("| simple-nav | 5/5 |"), "{}", text(&out.stdout));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["successes"], 5);
    assert_eq!(r["trials"], 5);
}

#[test]
fn tracking_report_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("tracking.json");
    let out = eeroot(&["eval", "tracking", "--n", "3", "--seed", "1", "--forces", "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("force pulses, low-pass"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["trajectories"].as_array().unwrap().len(), 3);
    assert_eq!(r["limit_violations"], 0);
}

#[test]
fn serve_on_a_taken_port_exits_1() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = eeroot(&["serve", "--port", &port]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains(&port));
}
