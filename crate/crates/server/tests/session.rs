use std::sync::Arc;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use denoise_assist::dae::{Dims, ModelParams};
use denoise_assist_server::{serve, Shared};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(shared: Shared) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, Arc::new(shared)));
    format!("ws://{addr}")
}

async fn connect(url: &str) -> Client {
    connect_async(url).await.unwrap().0
}

async fn send(ws: &mut Client, v: Value) {
    ws.send(Message::Text(v.to_string())).await.unwrap();
}

/// Next JSON message, or `None` once the server closed.
async fn recv(ws: &mut Client) -> Option<Value> {
    loop {
        match tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("server timed out") {
            Some(Ok(Message::Text(t))) => return Some(serde_json::from_str(&t).unwrap()),
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return None,
            Some(Ok(_)) => {}
        }
    }
}

fn pair(v: &Value) -> [f64; 2] {
    [v[0].as_f64().unwrap(), v[1].as_f64().unwrap()]
}

fn zero_model() -> Shared {
    Shared::with_params(ModelParams::zeros(Dims::MICRO))
}

async fn init(ws: &mut Client, seed: u64, assist: bool, mode: &str) -> Value {
    send(ws, json!({"type": "init", "terrain_seed": seed, "assist": assist, "mode": mode})).await;
    recv(ws).await.unwrap()
}

#[tokio::test]
async fn human_session_without_assist_applies_raw() {
    let url = start(zero_model()).await;
    let mut ws = connect(&url).await;
    let terrain = init(&mut ws, 4, false, "human").await;
    assert_eq!(terrain["type"], "terrain");
    assert_eq!(terrain["seed"], 4);
    assert!(terrain["centerline"].as_array().unwrap().len() > 10);
    for tick in 0..30u64 {
        let steer = (tick as f64 * 0.2).sin() * 0.3;
        send(&mut ws, json!({"type": "input", "tick": tick, "steer": steer, "pedal": 0.5})).await;
        let s = recv(&mut ws).await.unwrap();
        assert_eq!(s["type"], "state");
        assert_eq!(s["tick"], tick);
        assert_eq!(pair(&s["applied_ci"]), [steer, 0.5]);
        assert_eq!(pair(&s["raw_ci"]), [steer, 0.5]);
        assert_eq!(s["assist_active"], false);
        assert_eq!(s["pose"].as_array().unwrap().len(), 3);
        assert!(s["latency_ms"]["end_to_end"].as_f64().unwrap() >= 0.0);
    }
}

#[tokio::test]
async fn human_session_with_assist_warms_up_then_blends() {
    let url = start(zero_model()).await;
    let mut ws = connect(&url).await;
    assert_eq!(init(&mut ws, 2, true, "human").await["type"], "terrain");
    for tick in 0..15u64 {
        send(&mut ws, json!({"type": "input", "tick": tick, "steer": 1.0, "pedal": -1.0})).await;
        let s = recv(&mut ws).await.unwrap();
        let applied = pair(&s["applied_ci"]);
        if tick < 9 {
            assert_eq!(applied, [1.0, -1.0], "tick {tick}");
            assert_eq!(s["assist_active"], false);
        } else {
            // The zero model reconstructs the neutral command.
            assert_eq!(s["assist_active"], true);
            assert!((applied[0] - 0.2).abs() < 1e-12 && (applied[1] + 0.2).abs() < 1e-12);
            assert!(pair(&s["assisted_ci"])[0].abs() < 1e-12);
        }
    }
}

#[tokio::test]
async fn malformed_message_gets_error_and_close() {
    let url = start(zero_model()).await;
    let mut ws = connect(&url).await;
    init(&mut ws, 1, false, "human").await;
    ws.send(Message::Text("{\"type\":\"input\",\"tick\":0}".into())).await.unwrap();
    let e = recv(&mut ws).await.unwrap();
    assert_eq!(e["type"], "error");
    assert!(e["msg"].as_str().unwrap().contains("malformed"));
    assert!(recv(&mut ws).await.is_none());
}

#[tokio::test]
async fn out_of_order_tick_is_rejected() {
    let url = start(zero_model()).await;
    let mut ws = connect(&url).await;
    init(&mut ws, 1, false, "human").await;
    send(&mut ws, json!({"type": "input", "tick": 5, "steer": 0.0, "pedal": 0.0})).await;
    assert_eq!(recv(&mut ws).await.unwrap()["type"], "error");
    assert!(recv(&mut ws).await.is_none());
}

#[tokio::test]
async fn assist_without_checkpoint_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let url = start(Shared::from_checkpoint(dir.path().join("missing.ckpt"))).await;
    let mut ws = connect(&url).await;
    let e = init(&mut ws, 1, true, "human").await;
    assert_eq!(e["type"], "error");
    assert!(e["msg"].as_str().unwrap().contains("missing.ckpt"));
    assert!(recv(&mut ws).await.is_none());

    // Unassisted sessions still work.
    let mut ws = connect(&url).await;
    assert_eq!(init(&mut ws, 1, false, "human").await["type"], "terrain");
}

#[tokio::test]
async fn mismatched_checkpoint_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("micro.ckpt");
    denoise_assist::dae::save_checkpoint(&ModelParams::<f64>::zeros(Dims::MICRO), &path).unwrap();
    let url = start(Shared::from_checkpoint(&path)).await;
    let mut ws = connect(&url).await;
    assert_eq!(init(&mut ws, 1, true, "human").await["type"], "error");
}

#[tokio::test]
async fn first_message_must_be_init() {
    let url = start(zero_model()).await;
    let mut ws = connect(&url).await;
    send(&mut ws, json!({"type": "input", "tick": 0, "steer": 0.0, "pedal": 0.0})).await;
    assert_eq!(recv(&mut ws).await.unwrap()["type"], "error");
    assert!(recv(&mut ws).await.is_none());
}

#[tokio::test]
async fn synthetic_session_streams_at_ten_hertz() {
    let url = start(zero_model()).await;
    let mut ws = connect(&url).await;
    assert_eq!(init(&mut ws, 3, true, "synthetic").await["type"], "terrain");
    let start = Instant::now();
    let mut ticks = Vec::new();
    for _ in 0..12 {
        let s = recv(&mut ws).await.unwrap();
        ticks.push(s["tick"].as_u64().unwrap());
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(ticks, (0..12).collect::<Vec<_>>());
    // First tick fires immediately; eleven more periods follow.
    assert!(elapsed > 1.0 && elapsed < 1.6, "{elapsed}");
    send(&mut ws, json!({"type": "error", "msg": "done"})).await;
    assert!(recv(&mut ws).await.is_none());
}

#[tokio::test]
async fn session_ends_at_tick_limit() {
    let url = start(Shared {
        max_ticks: Some(5),
        ..zero_model()
    })
    .await;
    let mut ws = connect(&url).await;
    init(&mut ws, 1, false, "human").await;
    for tick in 0..5u64 {
        send(&mut ws, json!({"type": "input", "tick": tick, "steer": 0.0, "pedal": 0.3})).await;
        let s = recv(&mut ws).await.unwrap();
        assert_eq!(s["finished"], tick == 4);
    }
    assert!(recv(&mut ws).await.is_none());
}
