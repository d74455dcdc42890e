//! WebSocket service hosting live play sessions.
//!
//! One connection carries at most one live session at a time. Human and
//! agent episodes share the simulator, so only the action source differs.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use semnav_core::agent::{ManualRun, Termination};
use semnav_core::geosem::Pose;
use semnav_core::world::Action;
use tokio::net::TcpListener;
use tokio::time::sleep_until;
use tracing::{info, warn};

use crate::config::{ConfigError, Prepared, RunConfig};
use crate::harness::{run_one, Policy};
use crate::leaderboard::{table, Entry, Leaderboard, Player};
use crate::protocol::{encode, parse_client, ClientMessage, ErrorCode, ServerMessage};

pub struct ServerConfig {
    /// Parameters and data sources; `floorplan` and `target` are ignored.
    pub base: RunConfig,
    /// Plan name to data source.
    pub plans: BTreeMap<String, String>,
    pub leaderboard: Leaderboard,
    /// Wall-clock seconds spent per simulated second of each action. While
    /// an action plays out, further actions are refused as busy.
    pub pace: f64,
    /// Run the agent on a task when a human finishes it and no agent entry
    /// exists yet.
    pub agent_entries: bool,
}

/// Plan name and optional target override.
type TaskKey = (String, Option<String>);

struct Shared {
    config: ServerConfig,
    tasks: Mutex<BTreeMap<TaskKey, Arc<Prepared>>>,
    next_id: AtomicU64,
}

impl Shared {
    fn task(&self, plan: &str, target: Option<&str>) -> Result<Arc<Prepared>, String> {
        let key = (plan.to_string(), target.map(str::to_string));
        if let Some(p) = self.tasks.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let source = self.config.plans.get(plan).ok_or_else(|| format!("unknown plan {plan:?}"))?;
        let cfg = RunConfig { floorplan: source.clone(), target: key.1.clone(), start: None, ..self.config.base.clone() };
        let p = Arc::new(cfg.prepare().map_err(|e: ConfigError| e.to_string())?);
        self.tasks.lock().unwrap().insert(key, p.clone());
        Ok(p)
    }
}

pub fn router(config: ServerConfig) -> Router {
    let shared = Arc::new(Shared { config, tasks: Mutex::new(BTreeMap::new()), next_id: AtomicU64::new(1) });
    Router::new().route("/ws", get(ws_handler)).route("/leaderboard", get(leaderboard_handler)).with_state(shared)
}

pub async fn serve(addr: SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(config)).await
}

/// Serves on an already bound listener; used by tests with port 0.
pub async fn serve_on(listener: TcpListener, config: ServerConfig) -> std::io::Result<()> {
    axum::serve(listener, router(config)).await
}

async fn leaderboard_handler(State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    match shared.config.leaderboard.entries() {
        Ok(entries) => Json(serde_json::json!({ "rows": table(&entries) })).into_response(),
        Err(e) => (axum::http::StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    socket.send(Message::Text(encode(msg).into())).await.is_ok()
}

struct Live<'s, 'p> {
    id: u64,
    plan: String,
    seed: u64,
    started: Instant,
    manual: ManualRun<'s, 'p>,
    budget: usize,
}

impl Live<'_, '_> {
    fn frame(&self, target: &str) -> ServerMessage {
        ServerMessage::frame(
            self.id,
            target,
            self.manual.ego(),
            self.manual.run.elapsed_s,
            self.started.elapsed().as_secs_f64(),
            self.manual.run.steps(),
        )
    }
}

async fn connection(mut socket: WebSocket, shared: Arc<Shared>) {
    loop {
        let Some((task, seed)) = await_start(&mut socket).await else { return };
        let task = match shared.task(&task.0, task.1.as_deref()) {
            Ok(t) => t,
            Err(e) => {
                if !send(&mut socket, &ServerMessage::error(ErrorCode::Malformed, e)).await {
                    return;
                }
                continue;
            }
        };
        let plan_name = task.plan.name.clone();
        let sim = match task.simulator() {
            Ok(s) => s,
            Err(e) => {
                warn!("simulator: {e}");
                return;
            }
        };
        let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
        let manual = match ManualRun::begin(&sim, task.start, seed) {
            Ok(m) => m,
            Err(e) => {
                warn!("session start: {e}");
                return;
            }
        };
        let live = Live { id, plan: plan_name, seed, started: Instant::now(), manual, budget: task.landmark.budget };
        info!(session = id, plan = %live.plan, "session started");
        let open = play(&mut socket, &shared, &task, live).await;
        if !open {
            return;
        }
    }
}

/// Waits for a start message, answering anything else.
async fn await_start(socket: &mut WebSocket) -> Option<(TaskKey, u64)> {
    while let Some(Ok(msg)) = socket.recv().await {
        let reply = match msg {
            Message::Text(t) => match parse_client(&t) {
                Ok(ClientMessage::Start { plan, target, seed }) => return Some(((plan, target), seed.unwrap_or(0))),
                Ok(_) => ServerMessage::error(ErrorCode::UnknownSession, "no live session"),
                Err(e) => ServerMessage::error(ErrorCode::Malformed, e.to_string()),
            },
            Message::Binary(_) => ServerMessage::error(ErrorCode::Malformed, "expected a text message"),
            Message::Close(_) => return None,
            _ => continue,
        };
        if !send(socket, &reply).await {
            return None;
        }
    }
    None
}

/// Runs one session to its end. Returns whether the connection is still open.
async fn play(socket: &mut WebSocket, shared: &Arc<Shared>, task: &Arc<Prepared>, mut live: Live<'_, '_>) -> bool {
    let target = task.target.clone();
    if !send(socket, &live.frame(&target)).await {
        finalize(shared, task, live, Termination::Stopped).await;
        return false;
    }
    let pace = shared.config.pace;
    let mut pending: Option<(tokio::time::Instant, Vec<ServerMessage>)> = None;
    let mut ended: Option<Termination> = None;
    loop {
        if ended.is_some() && pending.is_none() {
            break;
        }
        let deadline = pending.as_ref().map(|p| p.0);
        tokio::select! {
            _ = async { sleep_until(deadline.unwrap()).await }, if deadline.is_some() => {
                let (_, msgs) = pending.take().unwrap();
                for m in &msgs {
                    if !send(socket, m).await {
                        finalize(shared, task, live, ended.unwrap_or(Termination::Stopped)).await;
                        return false;
                    }
                }
            }
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        if !send(socket, &ServerMessage::error(ErrorCode::Malformed, "expected a text message")).await {
                            finalize(shared, task, live, Termination::Stopped).await;
                            return false;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => {
                        finalize(shared, task, live, ended.unwrap_or(Termination::Stopped)).await;
                        return false;
                    }
                    Some(Ok(_)) => continue,
                };
                let reply = match parse_client(&text) {
                    Err(e) => Some(ServerMessage::error(ErrorCode::Malformed, e.to_string())),
                    Ok(ClientMessage::Quit) if ended.is_none() => {
                        ended = Some(Termination::Stopped);
                        None
                    }
                    Ok(_) if ended.is_some() || pending.is_some() => {
                        Some(ServerMessage::error(ErrorCode::Busy, "previous action still in progress"))
                    }
                    Ok(ClientMessage::Start { .. }) => Some(ServerMessage::error(ErrorCode::Busy, "a session is already live")),
                    Ok(ClientMessage::Quit) => None,
                    Ok(ClientMessage::Action { value }) => {
                        let before = live.manual.run.elapsed_s;
                        if value == Action::Stop {
                            live.manual.step(value);
                            ended = Some(if live.manual.found() { Termination::Found } else { Termination::Stopped });
                        } else {
                            live.manual.step(value);
                            if live.manual.found() {
                                ended = Some(Termination::Found);
                            } else if live.manual.run.steps() >= live.budget {
                                ended = Some(Termination::Budget);
                            }
                        }
                        let wait = Duration::from_secs_f64(((live.manual.run.elapsed_s - before) * pace).max(0.0));
                        pending = Some((tokio::time::Instant::now() + wait, vec![live.frame(&target)]));
                        None
                    }
                };
                if let Some(r) = reply {
                    if !send(socket, &r).await {
                        finalize(shared, task, live, ended.unwrap_or(Termination::Stopped)).await;
                        return false;
                    }
                }
            }
        }
    }
    let end = ended.unwrap_or(Termination::Stopped);
    let msg = result_message(&live, end);
    finalize(shared, task, live, end).await;
    send(socket, &msg).await
}

fn result_message(live: &Live<'_, '_>, end: Termination) -> ServerMessage {
    ServerMessage::Result {
        session_id: live.id,
        success: end == Termination::Found,
        elapsed_s: live.manual.run.elapsed_s,
        wall_clock_s: live.started.elapsed().as_secs_f64(),
        steps: live.manual.run.steps(),
        final_pose: Pose::from(live.manual.run.state),
    }
}

async fn finalize(shared: &Arc<Shared>, task: &Arc<Prepared>, live: Live<'_, '_>, end: Termination) {
    let wall = live.started.elapsed().as_secs_f64();
    let (id, plan, seed) = (live.id, live.plan.clone(), live.seed);
    let result = live.manual.finish(end);
    info!(session = id, success = result.success, steps = result.steps, "session finished");
    let start = Pose::from(task.start);
    let entry = Entry {
        player: Player::Human,
        plan: plan.clone(),
        target: task.target.clone(),
        start,
        seed,
        wall_clock_s: Some(wall),
        result,
    };
    let board = &shared.config.leaderboard;
    if let Err(e) = board.append(&entry) {
        warn!("leaderboard append failed: {e}");
    }
    if !shared.config.agent_entries {
        return;
    }
    let has_agent = board
        .entries()
        .map(|es| es.iter().any(|e| e.player == Player::Agent && e.same_task(&plan, &task.target, start)))
        .unwrap_or(true);
    if has_agent {
        return;
    }
    let task = task.clone();
    let shared = shared.clone();
    let run = tokio::task::spawn_blocking(move || {
        let r = run_one(&task, Policy::Agent, seed).ok()?;
        Some(Entry { player: Player::Agent, plan, target: task.target.clone(), start, seed, wall_clock_s: None, result: r })
    })
    .await;
    if let Ok(Some(e)) = run {
        if let Err(err) = shared.config.leaderboard.append(&e) {
            warn!("leaderboard append failed: {err}");
        }
    }
}
