use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::Value;
use tokio_tungstenite::tungstenite::Message;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_magcrawl"))
}

#[test]
fn field_sweep_csv_has_header_plus_72_rows() {
    let out = bin().args(["sweep", "field"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 73);
    assert!(text.starts_with("alpha_deg,bx_mt,by_mt,bz_mt"));
}

#[test]
fn sweep_json_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pose.json");
    let st = bin().args(["sweep", "pose", "--format", "json", "--out"]).arg(&p).status().unwrap();
    assert!(st.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    let row182 = rows.iter().find(|r| r["h_mm"] == 182.0).unwrap();
    assert_eq!(row182["pass"], true);
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"setup": {"height": 3}}"#).unwrap();
    let out = bin().arg("--config").arg(&p).args(["sweep", "field"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn validate_writes_report_and_exit_tracks_hard_gates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("report.json");
    let out = bin().args(["validate", "--out"]).arg(&p).output().unwrap();
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    let passed = report["passed"].as_bool().unwrap();
    assert_eq!(out.status.success(), passed);
    assert_eq!(out.status.code(), Some(if passed { 0 } else { 1 }));
    // a second run is byte-identical
    let q = dir.path().join("again.json");
    bin().args(["validate", "--out"]).arg(&q).output().unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
}

#[test]
fn scenario_record_then_replay_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("in.jsonl");
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let st = bin()
        .args(["scenario", "--scene", "s-curve", "--ticks", "300", "--record"])
        .arg(&log)
        .arg("--out")
        .arg(&a)
        .status()
        .unwrap();
    assert!(st.success());
    let st = bin()
        .args(["scenario", "--scene", "s-curve", "--ticks", "300", "--replay"])
        .arg(&log)
        .arg("--out")
        .arg(&b)
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_server() -> (Server, String) {
    let mut child = bin()
        .args(["steer-serve", "--scene", "straight", "--port", "0", "--tick-rate", "60"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    (Server(child), url)
}

async fn next_json<S>(ws: &mut S) -> Value
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let m = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(t) = m {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn wait_for<S>(ws: &mut S, pred: impl Fn(&Value) -> bool) -> Value
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    for _ in 0..2000 {
        let v = next_json(ws).await;
        if pred(&v) {
            return v;
        }
    }
    panic!("expected message never arrived");
}

#[tokio::test(flavor = "multi_thread")]
async fn websocket_session() {
    let (_server, url) = start_server();
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let info = next_json(&mut ws).await;
    assert_eq!(info["type"], "scene_info");
    assert_eq!(info["id"], "straight");

    ws.send(Message::Text("{".into())).await.unwrap();
    let e = wait_for(&mut ws, |v| v["type"] == "error").await;
    assert_eq!(e["code"], "bad_json");
    ws.send(Message::Text(r#"{"type":"nonsense"}"#.into())).await.unwrap();
    let e = wait_for(&mut ws, |v| v["type"] == "error").await;
    assert_eq!(e["code"], "unknown_type");

    ws.send(Message::Text(r#"{"type":"start","scene":"straight","units":2}"#.into())).await.unwrap();
    ws.send(Message::Text(r#"{"type":"set","param":"freq","value":9}"#.into())).await.unwrap();
    let f = wait_for(&mut ws, |v| v["type"] == "state" && v["control"]["frequency"] == 2.0).await;
    assert_eq!(f["units"].as_array().unwrap().len(), 2);
    let t0 = f["tick"].as_u64().unwrap();
    let g = wait_for(&mut ws, |v| v["type"] == "state" && v["tick"].as_u64().unwrap() > t0 + 5).await;
    assert!(g["units"][0]["x"].as_f64() != f["units"][0]["x"].as_f64());

    // a second client can watch but not steer
    let (mut viewer, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    assert_eq!(next_json(&mut viewer).await["type"], "scene_info");
    assert_eq!(wait_for(&mut viewer, |v| v["type"] == "state").await["type"], "state");
    viewer.send(Message::Text(r#"{"type":"pause"}"#.into())).await.unwrap();
    let e = wait_for(&mut viewer, |v| v["type"] == "error").await;
    assert_eq!(e["code"], "not_controller");
}
