use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

const SCENES: &str = r#"{
  "scenes": [
    {
      "name": "drift",
      "width": 200, "height": 160,
      "quad": [60, 45, 140, 45, 140, 115, 60, 115],
      "texture": {"kind": "noise", "seed": 2},
      "trajectory": [{"frames": 11, "motions": [{"kind": "translate", "dx": 1.5, "dy": 0.5}]}],
      "seed": 4
    },
    {
      "width": 200, "height": 160,
      "quad": [70, 50, 130, 50, 130, 110, 70, 110],
      "texture": {"kind": "checkerboard", "cell": 8},
      "trajectory": [{"frames": 11, "motions": [{"kind": "rotate", "deg": 1.0}]}],
      "occluders": [{"rect": [0, 0, 80, 70], "from": 4, "to": 6}],
      "seed": 5
    }
  ]
}"#;

fn woftsam(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_woftsam"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "woftsam {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) {
    let spec = dir.join("scenes.json");
    std::fs::write(&spec, SCENES).unwrap();
    woftsam(&["synth", "--spec", s(&spec), "--out", s(&dir.join("data"))]);
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_track_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let data = tmp.path().join("data");
    for seq in ["drift", "seq001"] {
        for f in ["annot.txt", "gt.csv", "spec.json", "frames/frame_000011.pgm", "masks/frame_000011.pgm"] {
            assert!(data.join(seq).join(f).is_file(), "{seq}/{f}");
        }
    }
    let attrs = std::fs::read_to_string(data.join("attributes.txt")).unwrap();
    assert!(attrs.lines().any(|l| l.starts_with("drift ") && l.contains("translation")), "{attrs}");
    assert!(attrs.lines().any(|l| l.starts_with("seq001 ") && l.contains("rotation")), "{attrs}");

    let oracle = tmp.path().join("oracle");
    for seq in ["drift", "seq001"] {
        woftsam(&[
            "track",
            "--seq",
            s(&data.join(seq)),
            "--provider-masks",
            "synthetic",
            "--provider-flow",
            "oracle",
            "--out",
            s(&oracle.join(format!("{seq}.csv"))),
        ]);
    }
    let csv = std::fs::read_to_string(oracle.join("drift.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.lines().nth(1).unwrap().contains(",init,"));

    let out = tmp.path().join("eval");
    let stdout = woftsam(&["eval", "--gt", s(&data), "--pred", s(&oracle), "--out", s(&out)]).stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("p@5 = 1.0000"));
    let r = report(&out.join("report.json"));
    assert_eq!(r["thresholds"], serde_json::json!([5.0, 15.0]));
    assert_eq!(r["aggregate"][0]["value"], 1.0);
    assert_eq!(r["sequences"].as_array().unwrap().len(), 2);
    assert_eq!(r["attributes"][0]["attribute"], "All");
    assert_eq!(r["ema"].as_array().unwrap().len(), 12);
    assert!(out.join("success_curve.csv").is_file());
    assert!(out.join("timeplot.csv").is_file());

    // tracking from the files on disk, with one prediction missing
    let files = tmp.path().join("files");
    woftsam(&["track", "--seq", s(&data.join("drift")), "--out", s(&files.join("drift").join("poses.csv"))]);
    let json = tmp.path().join("files.json");
    woftsam(&["eval", "--gt", s(&data), "--pred", s(&files), "--thresholds", "5", "--out", s(&json)]);
    let r = report(&json);
    let seqs = r["sequences"].as_array().unwrap();
    assert_eq!(seqs[0]["name"], "drift");
    assert_eq!(seqs[0]["precision"][0]["value"], 1.0);
    assert_eq!(seqs[1]["precision"][0]["value"], 0.0);
    assert_eq!(r["aggregate"][0]["value"], 0.5);
}

#[test]
fn ablation_writes_one_row_per_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let out = tmp.path().join("ablate");
    woftsam(&[
        "ablate",
        "--data",
        s(&tmp.path().join("data")),
        "--thresholds",
        "0.1,0.3",
        "--provider-masks",
        "synthetic",
        "--provider-flow",
        "synthetic",
        "--fault-frames",
        "3-5",
        "--fault-fraction",
        "0.8",
        "--out",
        s(&out),
    ]);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let paths = ["attempt1", "attempt2", "fallback"].map(|k| r[k].as_u64().unwrap());
        assert_eq!(paths.iter().sum::<u64>(), 2 * 11);
    }
    assert!(rows[1]["fallback"].as_u64() >= rows[0]["fallback"].as_u64());
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("threshold_0.3").join("seq001.csv").is_file());
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_woftsam"))
        .args(["track", "--seq", s(tmp.path()), "--out", s(&tmp.path().join("p.csv"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame_000000.pgm"));
}

#[test]
fn annotation_server_answers_over_http() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_woftsam"))
        .args(["annot-serve", "--data", s(&tmp.path().join("data")), "--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let mut stream = loop {
        match TcpStream::connect(("127.0.0.1", port)) {
            Ok(s) => break s,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(100)),
            Err(e) => {
                child.kill().ok();
                panic!("server did not start: {e}");
            }
        }
    };
    stream
        .write_all(b"GET /sequences HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .unwrap();
    let mut body = String::new();
    stream.read_to_string(&mut body).unwrap();
    child.kill().ok();
    child.wait().ok();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("\"drift\"") && body.contains("\"seq001\""), "{body}");
}
