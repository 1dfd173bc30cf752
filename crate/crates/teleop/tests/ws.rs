use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use spherebot_teleop::protocol::ServerMessage;
use spherebot_teleop::{router, AppState, ServerConfig, SessionInfo};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::time::{sleep, timeout, Instant};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(config: ServerConfig) -> (SocketAddr, AppState) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let state = AppState::new(config);
    let app = router(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (addr, state)
}

/// Minimal HTTP/1.1 exchange: status code and decoded JSON body.
async fn http(addr: SocketAddr, method: &str, path: &str, body: Option<Value>) -> (u16, Value) {
    let body = body.map(|b| b.to_string()).unwrap_or_default();
    let mut req = format!("{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n");
    if !body.is_empty() {
        req += &format!("Content-Type: application/json\r\nContent-Length: {}\r\n", body.len());
    }
    req += "\r\n";
    req += &body;
    let mut stream = TcpStream::connect(addr).await.unwrap();
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).await.unwrap();
    let status = raw.split_whitespace().nth(1).unwrap().parse().unwrap();
    let payload = raw.split_once("\r\n\r\n").map(|(_, b)| b).unwrap_or("");
    (status, serde_json::from_str(payload).unwrap_or(Value::Null))
}

async fn create(addr: SocketAddr, body: Option<Value>) -> SessionInfo {
    let (status, v) = http(addr, "POST", "/session", body).await;
    assert_eq!(status, 201, "{v}");
    serde_json::from_value(v).unwrap()
}

async fn connect(addr: SocketAddr, info: &SessionInfo) -> Socket {
    connect_async(format!("ws://{addr}/ws/session/{}", info.id)).await.unwrap().0
}

async fn next(ws: &mut Socket) -> ServerMessage {
    loop {
        let msg = timeout(Duration::from_secs(5), ws.next()).await.expect("server went quiet").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Sends a command and returns the direct reply, skipping telemetry.
async fn command(ws: &mut Socket, cmd: Value) -> ServerMessage {
    ws.send(Message::Text(cmd.to_string().into())).await.unwrap();
    loop {
        match next(ws).await {
            ServerMessage::Telemetry(_) => continue,
            other => return other,
        }
    }
}

async fn telemetry(ws: &mut Socket) -> spherebot_teleop::protocol::TelemetryMessage {
    loop {
        if let ServerMessage::Telemetry(t) = next(ws).await {
            return t;
        }
    }
}

/// First telemetry satisfying `pred`; older frames may still be queued
/// behind a command's ack.
async fn telemetry_until(
    ws: &mut Socket,
    pred: impl Fn(&spherebot_teleop::protocol::TelemetryMessage) -> bool,
) -> spherebot_teleop::protocol::TelemetryMessage {
    let deadline = Instant::now() + Duration::from_secs(1);
    loop {
        let t = telemetry(ws).await;
        if pred(&t) {
            return t;
        }
        assert!(Instant::now() < deadline, "condition never reached; last frame at t = {}", t.t);
    }
}

fn kind(m: &ServerMessage) -> Option<&'static str> {
    match m {
        ServerMessage::Error { kind, .. } => Some(match kind {
            spherebot_teleop::protocol::ErrorKind::Schema => "schema",
            spherebot_teleop::protocol::ErrorKind::Bounds => "bounds",
            spherebot_teleop::protocol::ErrorKind::Numerical => "numerical",
            spherebot_teleop::protocol::ErrorKind::NotFound => "not_found",
        }),
        _ => None,
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn create_echoes_params_and_config_is_readable() {
    let (addr, state) = start(ServerConfig::default()).await;
    let info = create(addr, None).await;
    assert_eq!(info.params, spherebot_core::RobotParams::default());
    let (status, v) = http(addr, "GET", &format!("/session/{}/config", info.id), None).await;
    assert_eq!(status, 200);
    assert_eq!(v["id"], json!(info.id));
    assert_eq!(v["config"]["telemetry_hz"], json!(20.0));

    let custom = create(addr, Some(json!({ "params": { "m_h": 2.0, "m_y": 1.5, "m_p": 2.5, "r_h": 0.15, "r_p": 0.1, "g": 9.81 }, "telemetry_hz": 10.0 }))).await;
    assert_eq!(custom.params.m_p, 2.5);
    assert_eq!(custom.config.telemetry_hz, 10.0);
    assert_eq!(state.session_count(), 2);

    let (status, _) = http(addr, "POST", "/session", Some(json!({ "telemetry_hz": -1.0 }))).await;
    assert_eq!(status, 400);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unknown_sessions_are_not_found() {
    let (addr, _) = start(ServerConfig::default()).await;
    let (status, v) = http(addr, "GET", "/session/00000000-0000-0000-0000-000000000000/config", None).await;
    assert_eq!(status, 404);
    assert_eq!(v["kind"], "not_found");
    let (status, _) = http(addr, "GET", "/session/garbage/config", None).await;
    assert_eq!(status, 404);
    match connect_async(format!("ws://{addr}/ws/session/00000000-0000-0000-0000-000000000000")).await {
        Err(tokio_tungstenite::tungstenite::Error::Http(r)) => assert_eq!(r.status(), 404),
        other => panic!("expected a 404 upgrade failure, got {:?}", other.map(|_| ())),
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn commands_are_acked_or_rejected() {
    let (addr, _) = start(ServerConfig::default()).await;
    let info = create(addr, None).await;
    let mut ws = connect(addr, &info).await;

    let ack = command(&mut ws, json!({ "type": "set_speed", "value": -1.0 })).await;
    assert_eq!(ack, ServerMessage::Ack { command: "set_speed".into(), value: json!(-1.0) });
    let ack = command(&mut ws, json!({ "type": "set_blend", "gamma": 0.9, "delta": 0.1 })).await;
    assert_eq!(ack, ServerMessage::Ack { command: "set_blend".into(), value: json!({ "gamma": 0.9, "delta": 0.1 }) });

    let err = command(&mut ws, json!({ "type": "set_pendulum", "value": 45.0 })).await;
    assert_eq!(kind(&err), Some("bounds"));
    let err = command(&mut ws, json!({ "type": "warp", "value": 1.0 })).await;
    assert_eq!(kind(&err), Some("schema"));
    let err = command(&mut ws, json!({ "type": "set_speed", "value": "fast" })).await;
    assert_eq!(kind(&err), Some("schema"));

    // The accepted setpoints are live; the rejected one left nothing behind.
    let tel = telemetry_until(&mut ws, |t| t.speed_setpoint == -1.0 && (t.mode.gamma, t.mode.delta) == (0.9, 0.1)).await;
    assert_eq!(tel.pendulum_setpoint_deg, 0.0);
    assert!(!tel.mode.paused);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pause_freezes_clock_but_telemetry_continues() {
    let (addr, _) = start(ServerConfig::default()).await;
    let info = create(addr, None).await;
    let mut ws = connect(addr, &info).await;
    command(&mut ws, json!({ "type": "set_speed", "value": -2.0 })).await;
    sleep(Duration::from_millis(300)).await;
    assert!(matches!(command(&mut ws, json!({ "type": "pause" })).await, ServerMessage::Ack { .. }));
    let first = telemetry_until(&mut ws, |t| t.mode.paused).await;
    let mut frozen = vec![];
    for _ in 0..5 {
        frozen.push(telemetry(&mut ws).await);
    }
    assert!(first.mode.paused && first.t > 0.0);
    for t in &frozen {
        assert_eq!(t.t, first.t);
        assert_eq!(t.state, first.state);
    }
    command(&mut ws, json!({ "type": "resume" })).await;
    let later = telemetry_until(&mut ws, |t| !t.mode.paused).await;
    assert!(later.t > first.t);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn reset_reinitializes_at_current_speed() {
    let (addr, _) = start(ServerConfig::default()).await;
    let info = create(addr, None).await;
    let mut ws = connect(addr, &info).await;
    command(&mut ws, json!({ "type": "set_speed", "value": -3.0 })).await;
    command(&mut ws, json!({ "type": "set_pendulum", "value": 10.0 })).await;
    sleep(Duration::from_millis(200)).await;
    let params = json!({ "m_h": 2.0, "m_y": 1.5, "m_p": 2.5, "r_h": 0.15, "r_p": 0.1, "g": 9.81 });
    let ack = command(&mut ws, json!({ "type": "reset", "params": params })).await;
    assert!(matches!(ack, ServerMessage::Ack { ref command, .. } if command == "reset"));
    let (_, v) = http(addr, "GET", &format!("/session/{}/config", info.id), None).await;
    assert_eq!(v["params"]["m_p"], json!(2.5));
    let tel = telemetry_until(&mut ws, |t| t.t < 0.2).await;
    assert_eq!(tel.pendulum_setpoint_deg, 0.0);
    assert!((tel.state.dpsi + 3.0).abs() < 0.05);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn disconnected_sessions_are_reaped() {
    let config = ServerConfig { reap_after: Duration::from_millis(300), ..Default::default() };
    let (addr, state) = start(config).await;
    let info = create(addr, None).await;
    let mut ws = connect(addr, &info).await;
    telemetry(&mut ws).await;
    ws.close(None).await.unwrap();
    drop(ws);
    sleep(Duration::from_millis(100)).await;
    assert_eq!(state.session_count(), 1);
    let deadline = Instant::now() + Duration::from_secs(3);
    while state.session_count() > 0 && Instant::now() < deadline {
        sleep(Duration::from_millis(50)).await;
    }
    assert_eq!(state.session_count(), 0);
    let (status, _) = http(addr, "GET", &format!("/session/{}/config", info.id), None).await;
    assert_eq!(status, 404);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn sessions_are_independent() {
    let (addr, _) = start(ServerConfig::default()).await;
    let a = create(addr, None).await;
    let b = create(addr, None).await;
    let mut wa = connect(addr, &a).await;
    let mut wb = connect(addr, &b).await;
    command(&mut wa, json!({ "type": "set_speed", "value": -4.0 })).await;
    command(&mut wb, json!({ "type": "pause" })).await;
    sleep(Duration::from_millis(200)).await;
    let ta = telemetry_until(&mut wa, |t| t.speed_setpoint == -4.0).await;
    let tb = telemetry_until(&mut wb, |t| t.mode.paused).await;
    assert_eq!(tb.speed_setpoint, 0.0);
    assert!(!ta.mode.paused);
    assert!((ta.state.dpsi + 4.0).abs() < 0.5);
    assert_eq!(tb.state.dpsi, 0.0);
}

/// Scripted operator: pendulum-only turning until the lean oscillation is
/// established, then wobble control on. One minute of wall-clock time.
#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn headless_operator_sees_wobble_removed_at_full_rate() {
    const RUN: f64 = 60.0;
    const ENABLE_AT: f64 = 20.0;
    let (addr, _) = start(ServerConfig::default()).await;
    // A longer pendulum keeps the wobble term regular at every lean.
    let params = json!({ "m_h": 2.0, "m_y": 1.5, "m_p": 3.0, "r_h": 0.15, "r_p": 0.13, "g": 9.81 });
    let info = create(addr, Some(json!({ "params": params }))).await;
    let hz = info.config.telemetry_hz;
    let mut ws = connect(addr, &info).await;
    command(&mut ws, json!({ "type": "set_wobble_control", "enabled": false })).await;
    command(&mut ws, json!({ "type": "set_speed", "value": -1.0 })).await;
    command(&mut ws, json!({ "type": "set_pendulum", "value": 15.0 })).await;

    let start = Instant::now();
    let mut enabled = false;
    let mut trace = vec![];
    let mut arrivals = vec![];
    while start.elapsed().as_secs_f64() < RUN {
        if !enabled && start.elapsed().as_secs_f64() >= ENABLE_AT {
            ws.send(Message::Text(json!({ "type": "set_wobble_control", "enabled": true }).to_string().into())).await.unwrap();
            enabled = true;
        }
        match next(&mut ws).await {
            ServerMessage::Telemetry(t) => {
                arrivals.push(start.elapsed().as_secs_f64());
                trace.push((t.t, t.theta_deg, t.mode.wobble_control));
            }
            ServerMessage::Error { message, .. } => panic!("server error: {message}"),
            ServerMessage::Ack { .. } => {}
        }
    }

    // Rate: every whole second within ±20% of the configured rate.
    for s in 1..RUN as usize {
        let n = arrivals.iter().filter(|&&a| a >= (s - 1) as f64 && a < s as f64).count() as f64;
        assert!((n - hz).abs() <= 0.2 * hz, "{n} messages in second {s}");
    }

    let p2p = |from: f64, to: f64, on: bool| {
        let v: Vec<f64> = trace.iter().filter(|p| p.0 > from && p.0 <= to && p.2 == on).map(|p| p.1).collect();
        assert!(v.len() > 10, "too few samples in ({from}, {to}]");
        v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
    };
    let t_on = trace.iter().find(|p| p.2).expect("wobble control never reported on").0;
    let before = p2p(5.0, t_on, false);
    let after = p2p(t_on + 20.0, f64::INFINITY, true);
    assert!(before > 1.0, "no wobble to remove: {before}°");
    assert!(after < 0.2 * before, "θ peak-to-peak {before:.3}° -> {after:.3}°");
}
