use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use angiocorr::corrmodel::{ModelConfig, Task, TrainConfig};
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_angiocorr"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn tiny(task: Task) -> ModelConfig {
    ModelConfig {
        input_size: 16,
        feature_hw: (2, 2),
        channels: 8,
        encoder_layers: 1,
        decoder_layers: 1,
        heads: 2,
        head_mlp_layers: 3,
        ffn_dim: 8,
        task,
        waypoint_n: if task == Task::C2c { 5 } else { 0 },
    }
}

fn gen(dir: &Path) {
    let out = dir.join("data");
    let o = run(&["gen-data", "--out", out.to_str().unwrap(), "--subjects", "2", "--image-size", "64", "--test-fraction", "0.5", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn train(dir: &Path, task: Task, name: &str) {
    let cfg = json!({ "model": tiny(task), "train": TrainConfig { steps: 3, queries: 4, log_every: 1, ..Default::default() } });
    let cfg_path = dir.join(format!("{name}.json"));
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let o = run(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--data",
        dir.join("data").to_str().unwrap(),
        "--task",
        task.as_str(),
        "--out",
        dir.join(name).to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join(name).is_file());
}

#[test]
fn help_lists_every_subcommand() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for c in ["gen-data", "train", "eval", "trace", "serve", "--seed", "--config", "--verbose"] {
        assert!(text.contains(c), "{c}");
    }
    assert_eq!(code(&run(&["eval", "--help"])), 0);
}

#[test]
fn validation_failures_exit_2() {
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["train", "--task", "p2p"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let o = run(&["eval", "--data", missing.to_str().unwrap(), "--p2p", "a", "--c2c", "b"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("manifest"));
    let o = run(&["gen-data", "--out", dir.path().join("d").to_str().unwrap(), "--subjects", "0"]);
    assert_eq!(code(&o), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"modle\": {}}").unwrap();
    assert_eq!(code(&run(&["--config", bad.to_str().unwrap(), "trace", "--overlap", "--size", "64"])), 2);
}

#[test]
fn generate_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    assert!(d.join("data/manifest.json").is_file());
    train(d, Task::P2p, "p2p.ckpt");
    train(d, Task::C2c, "c2c.ckpt");
    let data = d.join("data");
    let args = |format: &str, out: &Path| {
        vec![
            "eval".to_string(),
            "--data".into(),
            data.to_str().unwrap().into(),
            "--p2p".into(),
            d.join("p2p.ckpt").to_str().unwrap().into(),
            "--c2c".into(),
            d.join("c2c.ckpt").to_str().unwrap().into(),
            "--max-pairs".into(),
            "3".into(),
            "--format".into(),
            format.into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let md = d.join("report.md");
    let o = bin().args(args("markdown", &md)).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&md).unwrap();
    assert!(text.contains("≤10°") && text.contains("| centerline | C |") && text.contains("5 points"));
    let csv = d.join("report.csv");
    let o = bin().args(args("csv", &csv)).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("section,row,column,count,mean,median"));

    // a P2P checkpoint where a C2C one is expected
    let o = run(&[
        "eval",
        "--data",
        data.to_str().unwrap(),
        "--p2p",
        d.join("p2p.ckpt").to_str().unwrap(),
        "--c2c",
        d.join("p2p.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    // fused trace with the model's correspondence
    let o = run(&[
        "trace",
        "--data",
        data.to_str().unwrap(),
        "--view",
        "0",
        "--target",
        "5",
        "--p2p",
        d.join("p2p.ckpt").to_str().unwrap(),
        "--from",
        "3,3",
        "--to",
        "60,50",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["path"][0], json!([3, 3]));
}

#[test]
fn overlap_trace_writes_json_and_overlays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.json");
    let o = run(&[
        "trace",
        "--overlap",
        "--size",
        "128",
        "--out",
        out.to_str().unwrap(),
        "--overlay-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let (s, f) = (v["single"]["hausdorff_px"].as_f64().unwrap(), v["fused"]["hausdorff_px"].as_f64().unwrap());
    assert!(f < s, "fused {f} single {s}");
    for name in ["single.pgm", "fused.pgm"] {
        assert!(std::fs::read(dir.path().join(name)).unwrap().starts_with(b"P5"));
    }
    let o = run(&["trace", "--overlap", "--size", "128", "--from", "500,3"]);
    assert_eq!(code(&o), 2);
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_answers_over_tcp() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = bin()
        .args(["serve", "--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let start = Instant::now();
    let mut reply = None;
    while start.elapsed() < Duration::from_secs(20) {
        if let Some(r) = http_get(port, "/api/views") {
            reply = Some(r);
            break;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let reply = reply.expect("server did not answer");
    assert!(reply.starts_with("HTTP/1.1 503"), "{reply}");
    assert!(reply.contains("dataset_unavailable"));
}
