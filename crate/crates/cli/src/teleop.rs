//! Real-time teleop service: one simulated world per WebSocket session,
//! driven by the latest human command and logged like agent episodes.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::sync::mpsc::error::TryRecvError;
use tower_http::services::ServeDir;

use udrive::protocol::log::{EpisodeHeader, LOG_FORMAT};
use udrive::protocol::{EpisodeLog, EpisodeMetrics, Origin, Outcome};
use udrive::{CaseSpec, DrivingEnv, PerturbationCase, RewardParams, Scenario, WorldConfig};

/// Commands a client may send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMsg {
    Cmd { a_tilde: f64 },
}

/// Messages the server sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMsg {
    Frame {
        t: u32,
        /// Base64 of the 100 gray bytes, row 0 (farthest ahead) first.
        grid: String,
        velocity: f64,
        front_gap: Option<f64>,
        status: String,
    },
    End {
        kind: Outcome,
        metrics: SessionSummary,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub steps: u32,
    pub traveled_m: f64,
    /// Absent when the driver never throttled.
    pub brake_to_throttle_ratio: Option<f64>,
    pub mean_velocity: f64,
    pub median_front_distance_m: Option<f64>,
    pub cumulative_reward: f64,
    pub ignored_commands: u64,
    pub log: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TeleopOptions {
    pub world: WorldConfig,
    pub reward: RewardParams,
    /// Session `k` resets its world with `seed + k`.
    pub seed: u64,
    pub log_dir: PathBuf,
    pub assets: Option<PathBuf>,
    /// Wall-clock time per simulation step.
    pub tick: Duration,
    /// Advance one step per received command instead of on the clock.
    pub lockstep: bool,
}

impl TeleopOptions {
    pub fn new(world: WorldConfig, reward: RewardParams, log_dir: PathBuf) -> Self {
        let tick = Duration::from_secs_f64(world.dt);
        Self { world, reward, seed: 0, log_dir, assets: None, tick, lockstep: false }
    }
}

struct Shared {
    opts: TeleopOptions,
    sessions: AtomicU64,
}

const FALLBACK_PAGE: &str = "<!doctype html><title>udrive teleop</title>\
<p>No UI assets are bundled. Connect a client to <code>/ws</code>: send \
<code>{\"type\":\"cmd\",\"a_tilde\":x}</code>, receive <code>frame</code> and <code>end</code> messages.</p>";

pub fn router(opts: TeleopOptions) -> Router {
    let assets = opts.assets.clone();
    let shared = Arc::new(Shared { opts, sessions: AtomicU64::new(0) });
    let app = Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(shared);
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(|| async { Html(FALLBACK_PAGE) }),
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, opts: TeleopOptions) -> std::io::Result<()> {
    std::fs::create_dir_all(&opts.log_dir)?;
    axum::serve(listener, router(opts)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| async move {
        let id = shared.sessions.fetch_add(1, Ordering::SeqCst);
        if let Err(e) = run_session(socket, &shared.opts, id).await {
            log::error!("teleop session {id}: {e}");
        }
    })
}

fn frame(env: &DrivingEnv) -> Message {
    let world = env.world();
    let msg = ServerMsg::Frame {
        t: world.t,
        grid: STANDARD.encode(&env.observation().vision),
        velocity: world.ego().velocity_mps,
        front_gap: world.front_gap_m(),
        status: world.status.kind.name().to_string(),
    };
    Message::Text(serde_json::to_string(&msg).expect("frame serializes").into())
}

/// Parses a command; `None` for anything malformed or out of range.
pub fn parse_command(text: &str) -> Option<f64> {
    match serde_json::from_str::<ClientMsg>(text) {
        Ok(ClientMsg::Cmd { a_tilde }) if a_tilde.is_finite() && (-1.0..=1.0).contains(&a_tilde) => Some(a_tilde),
        _ => None,
    }
}

async fn run_session(socket: WebSocket, opts: &TeleopOptions, id: u64) -> udrive::Result<()> {
    let (mut tx, mut rx) = socket.split();
    let (cmd_tx, mut cmd_rx) = mpsc::unbounded_channel::<f64>();
    let ignored = Arc::new(AtomicU64::new(0));
    let reader = {
        let ignored = ignored.clone();
        tokio::spawn(async move {
            while let Some(Ok(msg)) = rx.next().await {
                match msg {
                    Message::Text(text) => match parse_command(&text) {
                        Some(a) => {
                            if cmd_tx.send(a).is_err() {
                                break;
                            }
                        }
                        None => {
                            let n = ignored.fetch_add(1, Ordering::Relaxed) + 1;
                            log::warn!("session {id}: ignored malformed command ({n} so far)");
                        }
                    },
                    Message::Close(_) => break,
                    _ => {}
                }
            }
        })
    };

    let world_seed = opts.seed.wrapping_add(id);
    let spec = CaseSpec::fixed(PerturbationCase::Vevv);
    let mut env = DrivingEnv::new(opts.world.clone(), opts.reward, Scenario::CORRECT)?;
    let mut obs = env.reset(world_seed, spec)?.clone();
    let mut log = EpisodeLog::new(EpisodeHeader {
        format: LOG_FORMAT,
        origin: Origin::Human,
        scenario: Scenario::CORRECT,
        case: spec,
        world_seed,
        world: opts.world.clone(),
        reward: opts.reward,
        episode: id,
        policy: None,
    });
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let stem = format!("human_{stamp}_{id}");

    let mut connected = tx.send(frame(&env)).await.is_ok();
    let mut ticker = tokio::time::interval(opts.tick.max(Duration::from_micros(1)));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut held = 0.0;
    while connected {
        if opts.lockstep {
            match cmd_rx.recv().await {
                Some(a) => held = a,
                None => break,
            }
            if !opts.tick.is_zero() {
                ticker.tick().await;
            }
        } else {
            ticker.tick().await;
            loop {
                match cmd_rx.try_recv() {
                    Ok(a) => held = a,
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => {
                        connected = false;
                        break;
                    }
                }
            }
            if !connected {
                break;
            }
        }
        let tr = env.step(held, log.steps.len() as u32)?;
        log.push(obs, tr.record);
        obs = tr.observation;
        connected = tx.send(frame(&env)).await.is_ok();
        if tr.status.is_terminal() {
            let outcome = Outcome::from_status(tr.status.kind).expect("terminal status");
            log.finish(outcome, tr.status.t_terminal);
            break;
        }
    }
    if log.end.is_none() {
        log.finish(Outcome::Aborted, None);
    }
    let path = log.write(&opts.log_dir, &stem)?;
    log::info!("session {id} ended {} after {} steps, log {}", log.outcome().expect("finished"), log.steps.len(), path.display());

    if connected {
        let summary = summarize(&log, ignored.load(Ordering::Relaxed), path);
        let end = ServerMsg::End { kind: log.outcome().expect("finished"), metrics: summary };
        let _ = tx.send(Message::Text(serde_json::to_string(&end).expect("end serializes").into())).await;
        let _ = tx.send(Message::Close(None)).await;
    }
    reader.abort();
    Ok(())
}

fn summarize(log: &EpisodeLog, ignored: u64, path: PathBuf) -> SessionSummary {
    let finite = |x: f64| x.is_finite().then_some(x);
    match EpisodeMetrics::from_log(log) {
        Ok((m, _)) => SessionSummary {
            steps: m.steps,
            traveled_m: m.traveled_m,
            brake_to_throttle_ratio: finite(m.brake_to_throttle_ratio),
            mean_velocity: m.mean_velocity,
            median_front_distance_m: finite(m.median_front_distance_m),
            cumulative_reward: m.cumulative_reward,
            ignored_commands: ignored,
            log: path,
        },
        Err(_) => SessionSummary {
            steps: 0,
            traveled_m: 0.0,
            brake_to_throttle_ratio: None,
            mean_velocity: 0.0,
            median_front_distance_m: None,
            cumulative_reward: 0.0,
            ignored_commands: ignored,
            log: path,
        },
    }
}
