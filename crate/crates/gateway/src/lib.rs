//! WebSocket service for the operator console: live scene snapshots out,
//! drawn paths, boundaries and run controls in.
//!
//! One driver task owns the engine. Connections talk to it only through a
//! bounded command queue and read its latest snapshot from a watch slot.

pub mod driver;
pub mod protocol;
pub mod session;

pub use driver::{Driver, DriverCommand, DriverTiming, RunControl};
pub use protocol::{ClientMessage, ErrorCode, HelloInfo, Reply, ReplyBody, RequestError, RobotView, RunState, Snapshot};
pub use session::{Action, Scene, Session};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use skywatch_core::runner::{InvalidConfig, ScenarioConfig};
use std::net::{Ipv4Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::MissedTickBehavior;

pub const DEFAULT_PORT: u16 = 8713;
pub const COMMAND_QUEUE: usize = 64;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    InvalidConfig(#[from] InvalidConfig),
    #[error("gateway i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone)]
struct AppState {
    scene: Arc<Scene>,
    commands: mpsc::Sender<DriverCommand>,
    snapshots: watch::Receiver<Arc<Snapshot>>,
}

/// Builds the `/ws` router and spawns its driver task.
pub fn router(cfg: ScenarioConfig, timing: DriverTiming) -> Result<Router, InvalidConfig> {
    let driver = Driver::new(cfg.clone())?;
    let (snap_tx, snap_rx) = watch::channel(Arc::new(driver.snapshot()));
    let (cmd_tx, cmd_rx) = mpsc::channel(COMMAND_QUEUE);
    tokio::spawn(driver::drive(driver, cmd_rx, snap_tx, timing));
    let state = AppState { scene: Arc::new(Scene::new(&cfg)), commands: cmd_tx, snapshots: snap_rx };
    Ok(Router::new().route("/ws", get(upgrade)).with_state(state))
}

/// Serves `cfg` on an already bound listener.
pub async fn serve_on(listener: TcpListener, cfg: ScenarioConfig, timing: DriverTiming) -> Result<(), ServeError> {
    let app = router(cfg, timing)?;
    axum::serve(listener, app).await?;
    Ok(())
}

/// Serves `cfg` on `127.0.0.1:port` in real time.
pub async fn serve(cfg: ScenarioConfig, port: u16) -> Result<(), ServeError> {
    cfg.validate()?;
    let listener = TcpListener::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, port))).await?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening on /ws");
    serve_on(listener, cfg, DriverTiming::default()).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state))
}

fn snapshot_ticker(rate_hz: f64) -> tokio::time::Interval {
    let mut t = tokio::time::interval(Duration::from_secs_f64(1.0 / rate_hz));
    t.set_missed_tick_behavior(MissedTickBehavior::Skip);
    t
}

async fn connection(mut socket: WebSocket, state: AppState) {
    let mut session = Session::default();
    let mut rate = None;
    let mut ticker = snapshot_ticker(protocol::DEFAULT_RATE_HZ);
    loop {
        let outgoing = tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => respond(&mut session, &state, text.as_str()).await.to_text(),
                Some(Ok(Message::Binary(_))) => {
                    Reply::error(None, RequestError::bad_message("expected a text frame")).to_text()
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => continue,
            },
            _ = ticker.tick(), if rate.is_some() => {
                let snap = state.snapshots.borrow().clone();
                snap.to_text()
            }
        };
        if socket.send(Message::Text(outgoing.into())).await.is_err() {
            break;
        }
        if session.snapshot_rate() != rate {
            rate = session.snapshot_rate();
            if let Some(hz) = rate {
                ticker = snapshot_ticker(hz);
            }
        }
    }
    tracing::debug!("console connection closed");
}

async fn respond(session: &mut Session, state: &AppState, text: &str) -> Reply {
    let (msg_id, msg) = protocol::parse_client_message(text);
    let result = match (msg_id, msg) {
        (Some(id), Ok(msg)) => session.decide(&state.scene, msg).map(|a| (id, a)),
        (_, Err(e)) => Err(e),
        (None, Ok(_)) => unreachable!("a parsed message always has an id"),
    };
    let (id, action) = match result {
        Ok(v) => v,
        Err(e) => return Reply::error(msg_id, e),
    };
    match action {
        Action::Reply(body) => Reply::ok(id, body),
        Action::Edit { robot_id, mode, numbered } => {
            let (reply, rx) = oneshot::channel();
            match forward(state, DriverCommand::Edit { robot_id, mode, numbered, reply }, rx).await {
                Ok(Ok(Some(path_id))) => Reply::ok(id, ReplyBody::PathId { path_id }),
                Ok(Ok(None)) => Reply::ok(id, ReplyBody::Empty {}),
                Ok(Err(e)) => Reply::error(Some(id), RequestError::new(ErrorCode::UnknownRobot, e.to_string())),
                Err(e) => Reply::error(Some(id), e),
            }
        }
        Action::Run(control) => {
            let (reply, rx) = oneshot::channel();
            match forward(state, DriverCommand::Run { control, reply }, rx).await {
                Ok(run_state) => Reply::ok(id, ReplyBody::RunState { run_state }),
                Err(e) => Reply::error(Some(id), e),
            }
        }
    }
}

async fn forward<T>(state: &AppState, cmd: DriverCommand, rx: oneshot::Receiver<T>) -> Result<T, RequestError> {
    let gone = || RequestError::bad_message("scenario driver has stopped");
    state.commands.send(cmd).await.map_err(|_| gone())?;
    rx.await.map_err(|_| gone())
}
