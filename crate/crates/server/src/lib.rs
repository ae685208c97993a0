//! WebSocket front end of the assistance service.
//!
//! Each connection is one session: an `init` message, the terrain in reply,
//! then a per-tick exchange of `input` and `state` messages. In human mode the
//! client paces the ticks; in synthetic mode the server drives the vehicle
//! with a simulated unskilled driver on a 100 ms timer and only streams state.

use std::sync::Arc;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use log::{info, warn};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::WebSocketStream;

use denoise_assist::evaluator::DriverKind;
use denoise_assist::dae::{load_checkpoint, Dims};
use denoise_assist::drivers::UnskilledDriver;
use denoise_assist::service::protocol::{ClientMessage, DriveMode, ServerMessage, StateMessage};
use denoise_assist::service::{AssistSession, LatencyStats, SessionConfig, StageTimings, TICK_MS};
use denoise_assist::ModelParams64;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error(transparent)]
    Core(#[from] denoise_assist::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ServerError> = std::result::Result<T, E>;

/// State shared read-only by all sessions.
#[derive(Clone, Debug, Default)]
pub struct Shared {
    /// Loaded model; assisted sessions are refused without one.
    pub params: Option<Arc<ModelParams64>>,
    /// Why no model is available, reported to clients asking for assistance.
    pub load_error: Option<String>,
    /// Tick limit per session.
    pub max_ticks: Option<u64>,
}

impl Shared {
    pub fn with_params(params: ModelParams64) -> Self {
        Self {
            params: Some(Arc::new(params)),
            ..Self::default()
        }
    }

    /// Loads a full-size checkpoint; a failure is kept and reported per session.
    pub fn from_checkpoint(path: impl AsRef<std::path::Path>) -> Self {
        let path = path.as_ref();
        match load_checkpoint::<f64>(path, Some(Dims::FULL)) {
            Ok(p) => Self::with_params(p),
            Err(e) => Self {
                load_error: Some(format!("{}: {e}", path.display())),
                ..Self::default()
            },
        }
    }
}

/// Accepts connections forever, one task per session.
pub async fn serve(listener: TcpListener, shared: Arc<Shared>) -> Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let shared = shared.clone();
        tokio::spawn(async move {
            match handle_connection(stream, shared).await {
                Ok(stats) => info!(
                    "{peer}: session closed after {} ticks, inference mean {:.2} ms, missed deadlines {}",
                    stats.ticks(),
                    stats.inference.mean,
                    stats.missed_deadlines
                ),
                Err(e) => warn!("{peer}: {e}"),
            }
        });
    }
}

async fn handle_connection(stream: TcpStream, shared: Arc<Shared>) -> Result<LatencyStats> {
    stream.set_nodelay(true)?;
    let ws = tokio_tungstenite::accept_async(stream).await?;
    run_session(ws, &shared).await
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

async fn send<S>(ws: &mut WebSocketStream<S>, msg: &ServerMessage) -> Result<()>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    ws.send(Message::Text(msg.to_json())).await?;
    Ok(())
}

/// Sends an error frame and closes; the original error is returned.
async fn fail<S>(ws: &mut WebSocketStream<S>, err: ServerError) -> Result<LatencyStats>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let _ = send(ws, &ServerMessage::error(err.to_string())).await;
    let _ = ws.close(None).await;
    Err(err)
}

/// Next text frame; `None` once the peer has closed.
async fn next_text<S>(ws: &mut WebSocketStream<S>) -> Result<Option<String>>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    while let Some(msg) = ws.next().await {
        match msg? {
            Message::Text(t) => return Ok(Some(t)),
            Message::Close(_) => return Ok(None),
            Message::Binary(_) => return Err(ServerError::Protocol("binary frames are not supported".into())),
            _ => {}
        }
    }
    Ok(None)
}

/// Runs one session over an accepted WebSocket and returns its latency.
pub async fn run_session<S>(mut ws: WebSocketStream<S>, shared: &Shared) -> Result<LatencyStats>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let Some(text) = next_text(&mut ws).await? else {
        return Ok(LatencyStats::new(TICK_MS));
    };
    let (seed, assist, mode) = match ClientMessage::parse(&text) {
        Ok(ClientMessage::Init {
            terrain_seed,
            assist,
            mode,
        }) => (terrain_seed, assist, mode),
        Ok(other) => return fail(&mut ws, ServerError::Protocol(format!("expected init, got {other:?}"))).await,
        Err(e) => return fail(&mut ws, e.into()).await,
    };
    if assist && shared.params.is_none() {
        let why = shared.load_error.clone().unwrap_or_else(|| "no checkpoint loaded".into());
        return fail(&mut ws, ServerError::Protocol(format!("assistance unavailable: {why}"))).await;
    }
    let mut cfg = SessionConfig::new(seed, assist);
    if let Some(max) = shared.max_ticks {
        cfg.max_ticks = max;
    }
    let mut session = match AssistSession::new(cfg, shared.params.clone()) {
        Ok(s) => s,
        Err(e) => return fail(&mut ws, e.into()).await,
    };
    info!("session: seed {seed}, assist {assist}, mode {mode:?}");
    send(&mut ws, &ServerMessage::Terrain(session.terrain().clone())).await?;
    let result = match mode {
        DriveMode::Human => human_loop(&mut ws, &mut session).await,
        DriveMode::Synthetic => synthetic_loop(&mut ws, &mut session).await,
    };
    match result {
        Ok(()) => {
            let _ = ws.close(None).await;
            Ok(session.latency().clone())
        }
        Err(e @ (ServerError::Protocol(_) | ServerError::Core(_))) => fail(&mut ws, e).await,
        Err(e) => Err(e),
    }
}

/// Steps the session and sends the resulting state; `send` in the message
/// carries the previous tick's send time.
async fn tick_and_send<S>(
    ws: &mut WebSocketStream<S>,
    session: &mut AssistSession<f64>,
    raw: denoise_assist::sim::PhysicalControl,
    arrived: Instant,
    receive_ms: f64,
    last_send_ms: &mut f64,
) -> Result<()>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let report = session.step(raw)?;
    let mut t = StageTimings {
        receive: receive_ms,
        send: *last_send_ms,
        ..report.timings
    };
    t.end_to_end = ms(arrived);
    let mut state = StateMessage::from_report(&report, session.is_over());
    state.latency_ms = (&t).into();
    let start = Instant::now();
    send(ws, &ServerMessage::State(state)).await?;
    t.send = ms(start);
    t.end_to_end = ms(arrived);
    *last_send_ms = t.send;
    session.record_latency(&t);
    Ok(())
}

async fn human_loop<S>(ws: &mut WebSocketStream<S>, session: &mut AssistSession<f64>) -> Result<()>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let mut last_send = 0.0;
    while !session.is_over() {
        let Some(text) = next_text(ws).await? else {
            return Ok(());
        };
        let arrived = Instant::now();
        match ClientMessage::parse(&text)? {
            ClientMessage::Input { tick, steer, pedal } => {
                if tick != session.tick() {
                    return Err(ServerError::Protocol(format!(
                        "input for tick {tick}, expected {}",
                        session.tick()
                    )));
                }
                let receive = ms(arrived);
                let raw = denoise_assist::sim::PhysicalControl::new(steer, pedal);
                tick_and_send(ws, session, raw, arrived, receive, &mut last_send).await?;
            }
            ClientMessage::Error { msg } => {
                info!("client error: {msg}");
                return Ok(());
            }
            ClientMessage::Init { .. } => return Err(ServerError::Protocol("session already initialized".into())),
        }
    }
    Ok(())
}

async fn synthetic_loop<S>(ws: &mut WebSocketStream<S>, session: &mut AssistSession<f64>) -> Result<()>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let seed = session.config().terrain_seed;
    let mut driver = UnskilledDriver::new(DriverKind::Correlated.config(), seed);
    let track = session.world().track().clone();
    let vehicle = session.world().vehicle().clone();
    let mut timer = tokio::time::interval(Duration::from_millis(TICK_MS as u64));
    timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut last_send = 0.0;
    while !session.is_over() {
        tokio::select! {
            _ = timer.tick() => {
                let arrived = Instant::now();
                let raw = driver.control(session.world().state(), &track, &vehicle);
                tick_and_send(ws, session, raw, arrived, 0.0, &mut last_send).await?;
            }
            msg = ws.next() => match msg {
                None | Some(Ok(Message::Close(_))) => return Ok(()),
                Some(Ok(Message::Text(text))) => match ClientMessage::parse(&text)? {
                    ClientMessage::Error { msg } => {
                        info!("client error: {msg}");
                        return Ok(());
                    }
                    other => return Err(ServerError::Protocol(format!("unexpected {other:?} in synthetic mode"))),
                },
                Some(Ok(Message::Binary(_))) => return Err(ServerError::Protocol("binary frames are not supported".into())),
                Some(Ok(_)) => {}
                Some(Err(e)) => return Err(e.into()),
            },
        }
    }
    Ok(())
}
