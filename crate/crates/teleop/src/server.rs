//! HTTP and web-socket front end. Each session runs in its own task; the
//! socket handlers talk to it through channels only.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use spherebot_core::{ControllerGains, RobotParams};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::{interval, Instant, MissedTickBehavior};
use uuid::Uuid;

use crate::protocol::{parse_command, CommandMessage, ErrorKind, ServerMessage};
use crate::session::{Session, SessionConfig};

pub const PORT_ENV: &str = "SPHEREBOT_PORT";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub port: u16,
    pub params: RobotParams,
    pub session: SessionConfig,
    /// How long a session outlives its last client.
    pub reap_after: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { port: DEFAULT_PORT, params: RobotParams::default(), session: SessionConfig::default(), reap_after: Duration::from_secs(60) }
    }
}

impl ServerConfig {
    /// Defaults, with the port taken from `SPHEREBOT_PORT` when set.
    pub fn from_env() -> Self {
        let port = std::env::var(PORT_ENV).ok().and_then(|v| v.parse().ok()).unwrap_or(DEFAULT_PORT);
        Self { port, ..Default::default() }
    }
}

/// Optional body of `POST /session`; absent fields take server defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub params: Option<RobotParams>,
    pub gains: Option<ControllerGains>,
    pub telemetry_hz: Option<f64>,
    pub real_time_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: Uuid,
    pub params: RobotParams,
    pub config: SessionConfig,
}

struct Inbound {
    cmd: CommandMessage,
    reply: oneshot::Sender<ServerMessage>,
}

struct Handle {
    info: Arc<Mutex<SessionInfo>>,
    commands: mpsc::Sender<Inbound>,
    outbound: broadcast::Sender<ServerMessage>,
    clients: Arc<Mutex<usize>>,
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServerConfig>,
    sessions: Arc<Mutex<HashMap<Uuid, Handle>>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        Self { config: Arc::new(config), sessions: Arc::default() }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}/config", get(session_config))
        .route("/ws/session/{id}", get(session_socket))
        .with_state(state)
}

fn not_found(id: &str) -> Response {
    let body = ServerMessage::Error { kind: ErrorKind::NotFound, message: format!("no session {id}") };
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

async fn create_session(State(app): State<AppState>, body: Option<Json<CreateSession>>) -> Response {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let mut config = app.config.session;
    config.params = req.params.unwrap_or(app.config.params);
    if let Some(g) = req.gains {
        config.gains = g;
    }
    if let Some(hz) = req.telemetry_hz {
        config.telemetry_hz = hz;
    }
    if let Some(f) = req.real_time_factor {
        config.real_time_factor = f;
    }
    let session = match Session::new(config) {
        Ok(s) => s,
        Err(e) => {
            let body = ServerMessage::Error { kind: ErrorKind::Bounds, message: e.to_string() };
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };
    let id = Uuid::new_v4();
    let info = Arc::new(Mutex::new(SessionInfo { id, params: config.params, config }));
    let (commands, rx) = mpsc::channel(64);
    let (outbound, _) = broadcast::channel(256);
    let clients = Arc::new(Mutex::new(0));
    let handle = Handle { info: info.clone(), commands, outbound: outbound.clone(), clients: clients.clone() };
    app.sessions.lock().expect("session map").insert(id, handle);
    tokio::spawn(session_loop(app.clone(), id, session, rx, outbound, clients, info.clone()));
    info!("session {id} created");
    let snapshot = info.lock().expect("session info").clone();
    (StatusCode::CREATED, Json(snapshot)).into_response()
}

async fn session_config(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    let sessions = app.sessions.lock().expect("session map");
    match Uuid::parse_str(&id).ok().and_then(|u| sessions.get(&u)) {
        Some(h) => Json(h.info.lock().expect("session info").clone()).into_response(),
        None => not_found(&id),
    }
}

async fn session_socket(State(app): State<AppState>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Response {
    let channels = {
        let sessions = app.sessions.lock().expect("session map");
        Uuid::parse_str(&id).ok().and_then(|u| sessions.get(&u)).map(|h| {
            *h.clients.lock().expect("client count") += 1;
            (h.commands.clone(), h.outbound.subscribe(), h.clients.clone())
        })
    };
    match channels {
        Some((commands, telemetry, clients)) => {
            ws.on_upgrade(move |socket| client_loop(socket, commands, telemetry, clients)).into_response()
        }
        None => not_found(&id),
    }
}

async fn client_loop(
    socket: WebSocket,
    commands: mpsc::Sender<Inbound>,
    mut telemetry: broadcast::Receiver<ServerMessage>,
    clients: Arc<Mutex<usize>>,
) {
    let (mut sink, mut stream) = socket.split();
    let (direct_tx, mut direct_rx) = mpsc::channel::<ServerMessage>(32);
    let writer = tokio::spawn(async move {
        loop {
            let msg = tokio::select! {
                m = direct_rx.recv() => match m { Some(m) => m, None => break },
                m = telemetry.recv() => match m {
                    Ok(m) => m,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            if sink.send(Message::Text(msg.to_json().into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match parse_command(&text) {
            Err(e) => ServerMessage::error(&e),
            Ok(cmd) => {
                let (tx, rx) = oneshot::channel();
                if commands.send(Inbound { cmd, reply: tx }).await.is_err() {
                    break;
                }
                match rx.await {
                    Ok(r) => r,
                    Err(_) => break,
                }
            }
        };
        if direct_tx.send(reply).await.is_err() {
            break;
        }
    }
    drop(direct_tx);
    writer.abort();
    *clients.lock().expect("client count") -= 1;
}

async fn session_loop(
    app: AppState,
    id: Uuid,
    mut session: Session,
    mut commands: mpsc::Receiver<Inbound>,
    outbound: broadcast::Sender<ServerMessage>,
    clients: Arc<Mutex<usize>>,
    info: Arc<Mutex<SessionInfo>>,
) {
    let cfg = session.config;
    let mut sim_tick = interval(Duration::from_secs_f64(cfg.slice / cfg.real_time_factor));
    sim_tick.set_missed_tick_behavior(MissedTickBehavior::Skip);
    let mut telemetry_tick = interval(Duration::from_secs_f64(1.0 / cfg.telemetry_hz));
    telemetry_tick.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut alone_since = Some(Instant::now());
    loop {
        tokio::select! {
            _ = sim_tick.tick() => {
                while let Ok(Inbound { cmd, reply }) = commands.try_recv() {
                    let msg = match session.apply(&cmd) {
                        Ok(value) => {
                            if let CommandMessage::Reset { .. } = cmd {
                                let mut i = info.lock().expect("session info");
                                i.params = session.config.params;
                                i.config = session.config;
                            }
                            ServerMessage::Ack { command: cmd.name().into(), value }
                        }
                        Err(e) => ServerMessage::Error { kind: ErrorKind::Bounds, message: e.to_string() },
                    };
                    let _ = reply.send(msg);
                }
                if let Err(e) = session.step() {
                    let _ = outbound.send(ServerMessage::Error { kind: ErrorKind::Numerical, message: e.to_string() });
                }
                let connected = *clients.lock().expect("client count") > 0;
                match (connected, alone_since) {
                    (true, _) => alone_since = None,
                    (false, None) => alone_since = Some(Instant::now()),
                    (false, Some(since)) if since.elapsed() >= app.config.reap_after => break,
                    _ => {}
                }
            }
            _ = telemetry_tick.tick() => {
                let _ = outbound.send(ServerMessage::Telemetry(session.telemetry()));
            }
        }
    }
    app.sessions.lock().expect("session map").remove(&id);
    info!("session {id} reaped at t = {:.3}", session.t());
}

/// Binds `0.0.0.0:port` and serves until the process ends.
pub async fn serve(config: ServerConfig) -> std::io::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    warn!("teleop server listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
