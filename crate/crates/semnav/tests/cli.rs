use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semnav::formats::{import_triples, read_trace};
use semnav::harness::{result_path, Summary};
use semnav::leaderboard::{read_entries, Player};
use semnav_core::agent::EpisodeResult;

fn semnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semnav")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn result(dir: &Path, seed: u64) -> EpisodeResult {
    serde_json::from_str(&fs::read_to_string(result_path(dir, seed)).unwrap()).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = semnav(&["run", "--output", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("success=true"));

    let o = semnav(&["run", "--target", "tv", "--output", out]);
    assert_eq!(code(&o), 2);
    assert!(!result(dir.path(), 0).success);

    let o = semnav(&["run", "--floorplan", "missing.json"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));
    assert_eq!(code(&semnav(&["run", "--floorplan", "bundled:nowhere"])), 1);
    assert_eq!(code(&semnav(&["run", "--start", "0,0,0"])), 1);
    assert_eq!(code(&semnav(&["run", "--alpha", "-1"])), 1);
    assert_eq!(code(&semnav(&["run", "--bogus"])), 1);
    assert_eq!(code(&semnav(&["--help"])), 0);
    for sub in ["run", "batch", "baseline", "ingest", "serve", "replay"] {
        assert_eq!(code(&semnav(&[sub, "--help"])), 0, "{sub}");
    }
}

#[test]
fn serve_answers_leaderboard_requests() {
    use std::io::{Read, Write};
    use std::net::{TcpListener, TcpStream};
    let dir = tempfile::tempdir().unwrap();
    let board = dir.path().join("board.jsonl");
    let addr = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_semnav"))
        .args(["serve", "--bind", &addr.to_string(), "--leaderboard", board.to_str().unwrap()])
        .spawn()
        .unwrap();
    let mut stream = None;
    for _ in 0..100 {
        if let Ok(s) = TcpStream::connect(addr) {
            stream = Some(s);
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(100));
    }
    let mut stream = stream.expect("service listening");
    stream.write_all(b"GET /leaderboard HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut body = String::new();
    stream.read_to_string(&mut body).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("\"rows\":[]"), "{body}");
}

#[test]
fn batch_summary_matches_episode_files() {
    let dir = tempfile::tempdir().unwrap();
    let board = dir.path().join("board.jsonl");
    let o = semnav(&[
        "batch",
        "--floorplan",
        "bundled:webots_replica",
        "--n-seeds",
        "6",
        "--output",
        dir.path().to_str().unwrap(),
        "--leaderboard",
        board.to_str().unwrap(),
    ]);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));
    let results: Vec<EpisodeResult> = (0..6).map(|s| result(dir.path(), s)).collect();
    let recomputed = Summary::of(&results).unwrap();
    let written: Summary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(written, recomputed);
    assert!(String::from_utf8_lossy(&o.stdout).contains(&format!("({}/6)", recomputed.successes)));

    for (s, r) in results.iter().enumerate() {
        let f = fs::File::open(dir.path().join(format!("seed-{s}.trace.jsonl"))).unwrap();
        assert_eq!(read_trace(std::io::BufReader::new(f)).unwrap(), r.trace);
    }
    let entries = read_entries(&board).unwrap();
    assert_eq!(entries.len(), 6);
    assert!(entries.iter().all(|e| e.player == Player::Agent && e.plan == "webots_replica"));
}

#[test]
fn baseline_uses_the_same_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = semnav(&["baseline", "--policy", "random-walk", "--floorplan", "bundled:webots_replica", "--budget", "40", "--output", out]);
    assert!(matches!(code(&o), 0 | 2));
    let r = result(dir.path(), 0);
    assert!(r.steps <= 40);
    assert_eq!(r.actions.len(), r.steps);
}

#[test]
fn ingest_then_run_from_triples() {
    let dir = tempfile::tempdir().unwrap();
    let triples = dir.path().join("store.triples");
    let o = semnav(&["ingest", "--out", triples.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&triples).unwrap();
    assert!(import_triples(&text).is_ok());
    assert_eq!(semnav(&["ingest"]).stdout, text.as_bytes());

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&semnav(&["run", "--output", a.to_str().unwrap()])), 0);
    let o = semnav(&["run", "--triples", triples.to_str().unwrap(), "--output", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(a.join("seed-0.trace.jsonl")).unwrap(), fs::read(b.join("seed-0.trace.jsonl")).unwrap());
}

#[test]
fn replay_reproduces_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = semnav(&["run", "--floorplan", "bundled:webots_replica", "--output", out.to_str().unwrap()]);
    let first = String::from_utf8_lossy(&o.stdout).to_string();
    let r = result(&out, 0);
    for input in ["seed-0.trace.jsonl", "seed-0.result.json"] {
        let o = semnav(&["replay", "--floorplan", "bundled:webots_replica", out.join(input).to_str().unwrap()]);
        assert_eq!(code(&o), if r.success { 0 } else { 2 });
        let text = String::from_utf8_lossy(&o.stdout);
        let pose = format!("final=({}, {}, {})", r.final_pose.x, r.final_pose.y, r.final_pose.heading_deg);
        assert!(text.contains(&pose) && first.contains(&pose), "{text}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"floorplan": "bundled:office_fig3", "target": "tv", "seeds": [3]}"#).unwrap();
    let out = dir.path().join("o");
    let o = semnav(&["run", "--config", cfg.to_str().unwrap(), "--target", "cup", "--output", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(result_path(&out, 3).exists());
    fs::write(&cfg, r#"{"floorplan": "bundled:office_fig3", "colour": "red"}"#).unwrap();
    assert_eq!(code(&semnav(&["run", "--config", cfg.to_str().unwrap()])), 1);
}
