//! Websocket front for a steering session.
//!
//! One task owns the session and ticks it at the configured rate. Client
//! tasks decode messages and push them onto an ordered queue; frames go out
//! through a broadcast channel. The first client to send a command becomes
//! the controller until it disconnects; everyone else may only watch.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use magcrawl::teleop::{decode_client, encode_server, ClientMsg, LogEntry, ServerMsg, Session};
use tokio::sync::{broadcast, mpsc, RwLock};

#[derive(Clone)]
struct Shared {
    inbox: mpsc::UnboundedSender<ClientMsg>,
    frames: broadcast::Sender<String>,
    scene_info: Arc<RwLock<String>>,
    controller: Arc<AtomicU64>,
    next_id: Arc<AtomicU64>,
    replaying: bool,
}

pub async fn serve(
    session: Session,
    port: u16,
    record: Option<PathBuf>,
    replay: Option<Vec<LogEntry>>,
) -> Result<(), Box<dyn std::error::Error>> {
    let (inbox, rx) = mpsc::unbounded_channel();
    let (frames, _) = broadcast::channel(256);
    let shared = Shared {
        inbox,
        frames: frames.clone(),
        scene_info: Arc::new(RwLock::new(encode_server(&session.scene_info()))),
        controller: Arc::new(AtomicU64::new(0)),
        next_id: Arc::new(AtomicU64::new(1)),
        replaying: replay.is_some(),
    };
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    println!("listening on ws://{}/ws", listener.local_addr()?);
    std::io::stdout().flush()?;

    tokio::spawn(sim_loop(session, rx, frames, shared.scene_info.clone(), record, replay));

    let app = Router::new()
        .route("/", get(|| async { "magcrawl steering server; connect a websocket to /ws\n" }))
        .route("/ws", get(upgrade))
        .with_state(shared);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn sim_loop(
    mut session: Session,
    mut rx: mpsc::UnboundedReceiver<ClientMsg>,
    frames: broadcast::Sender<String>,
    scene_info: Arc<RwLock<String>>,
    record: Option<PathBuf>,
    replay: Option<Vec<LogEntry>>,
) {
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / session.tick_rate()));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut recorder = record.and_then(|p| match OpenOptions::new().create(true).truncate(true).write(true).open(&p) {
        Ok(f) => Some(f),
        Err(e) => {
            eprintln!("cannot open record log {}: {e}", p.display());
            None
        }
    });
    let mut logged = 0;
    let mut cursor = 0;
    loop {
        interval.tick().await;
        match &replay {
            Some(log) => {
                while cursor < log.len() && log[cursor].tick == session.tick_count() {
                    session.submit(log[cursor].msg.clone());
                    cursor += 1;
                }
                while rx.try_recv().is_ok() {}
            }
            None => {
                while let Ok(m) = rx.try_recv() {
                    session.submit(m);
                }
            }
        }
        let scene_before = session.scene().id.clone();
        let (frame, errors) = session.tick();
        if session.scene().id != scene_before {
            let info = encode_server(&session.scene_info());
            *scene_info.write().await = info.clone();
            let _ = frames.send(info);
        }
        for e in errors {
            let _ = frames.send(encode_server(&e.to_msg()));
        }
        if let Some(f) = recorder.as_mut() {
            for e in &session.log()[logged..] {
                let line = serde_json::to_string(e).expect("log entry serialises");
                if writeln!(f, "{line}").and_then(|_| f.flush()).is_err() {
                    eprintln!("record log write failed; recording stopped");
                    recorder = None;
                    break;
                }
            }
            logged = session.log().len();
        }
        let _ = frames.send(encode_server(&ServerMsg::State(frame)));
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

fn error_text(code: &str, text: &str) -> String {
    encode_server(&ServerMsg::Error { code: code.into(), text: text.into() })
}

async fn client(socket: WebSocket, shared: Shared) {
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
    let (mut tx, mut rx) = socket.split();
    let (reply, mut replies) = mpsc::unbounded_channel::<String>();
    let mut frames = shared.frames.subscribe();
    let info = shared.scene_info.read().await.clone();

    let writer = tokio::spawn(async move {
        if tx.send(Message::Text(info.into())).await.is_err() {
            return;
        }
        loop {
            let text = tokio::select! {
                r = replies.recv() => match r { Some(t) => t, None => break },
                f = frames.recv() => match f {
                    Ok(t) => t,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(_) => break,
                },
            };
            if tx.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(msg)) = rx.next().await {
        let bytes = match &msg {
            Message::Text(t) => t.as_bytes().to_vec(),
            Message::Binary(b) => b.to_vec(),
            Message::Close(_) => break,
            _ => continue,
        };
        match decode_client(&bytes) {
            Err(e) => {
                let _ = reply.send(encode_server(&e.to_msg()));
            }
            Ok(_) if shared.replaying => {
                let _ = reply.send(error_text("replaying", "session is replaying a log; input ignored"));
            }
            Ok(m) => {
                let owner = match shared.controller.compare_exchange(0, id, Ordering::AcqRel, Ordering::Acquire) {
                    Ok(_) => id,
                    Err(cur) => cur,
                };
                if owner == id {
                    let _ = shared.inbox.send(m);
                } else {
                    let _ = reply.send(error_text("not_controller", "another client is steering"));
                }
            }
        }
    }
    let _ = shared.controller.compare_exchange(id, 0, Ordering::AcqRel, Ordering::Acquire);
    drop(reply);
    writer.abort();
}
