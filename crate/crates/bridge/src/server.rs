//! The websocket service.
//!
//! One thread owns the [`Session`] and steps it; websocket connections and the
//! task thread talk to it only through a bounded inbound queue, and it talks
//! back through one bounded queue per client. Slow clients lose their oldest
//! `state` messages rather than holding up the tick loop.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use eeroot::config::Config;
use eeroot::eval::BackendKind;
use eeroot::runtime::{Observation, Runtime, SkillOutcome};
use eeroot::skills::{SkillCall, SkillError};
use eeroot::task::{run_task_with, Backend, Executor, LlmBackend, ScriptedBackend, TurnResult};
use eeroot::world::Scene;
use futures::{SinkExt, StreamExt};
use tokio::sync::Notify;

use crate::protocol::{parse_client, ClientMessage, Envelope, ErrorCode, ServerMessage};
use crate::session::{ClientId, Outgoing, Session};

/// Outbound messages waiting for one client.
pub struct ClientQueue {
    items: Mutex<VecDeque<(bool, String)>>,
    notify: Notify,
    capacity: usize,
    dropped: AtomicU64,
}

impl ClientQueue {
    pub fn new(capacity: usize) -> Self {
        Self { items: Mutex::new(VecDeque::new()), notify: Notify::new(), capacity: capacity.max(1), dropped: AtomicU64::new(0) }
    }

    /// Never blocks. When full, the oldest `state` goes first, else the oldest message.
    pub fn push(&self, is_state: bool, text: String) {
        let mut q = self.items.lock().unwrap_or_else(|e| e.into_inner());
        if q.len() >= self.capacity {
            let victim = q.iter().position(|(s, _)| *s).unwrap_or(0);
            q.remove(victim);
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        q.push_back((is_state, text));
        drop(q);
        self.notify.notify_one();
    }

    pub fn drain(&self) -> Vec<String> {
        self.items.lock().unwrap_or_else(|e| e.into_inner()).drain(..).map(|(_, t)| t).collect()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub async fn wait(&self) {
        self.notify.notified().await
    }
}

/// Snapshot the task thread asks for between skills.
pub struct Snapshot {
    pub scene: Scene,
    pub observation: Observation,
    pub time: f64,
    pub tick: u64,
}

pub enum Inbound {
    Connect { id: ClientId, queue: Arc<ClientQueue> },
    Disconnect { id: ClientId },
    Client { id: ClientId, message: ClientMessage },
    /// An error for one client, detected before it reached the session.
    Reply { id: ClientId, message: ServerMessage },
    Snapshot(mpsc::Sender<Snapshot>),
    Execute(SkillCall, mpsc::Sender<Result<SkillOutcome, SkillError>>),
    Broadcast(ServerMessage),
    TaskFinished,
    Shutdown,
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub cfg: Config,
    pub scene: Scene,
    pub backend: BackendKind,
    /// Step only while there is work (a skill, a task request, `cmd.step`)
    /// instead of at 50 Hz wall time. Runs are then reproducible.
    pub lockstep: bool,
    pub client_queue: usize,
    pub inbound_queue: usize,
}

impl ServerOptions {
    pub fn new(cfg: Config, scene: Scene, backend: BackendKind) -> Self {
        Self { cfg, scene, backend, lockstep: false, client_queue: 256, inbound_queue: 1024 }
    }
}

struct TickLoop {
    session: Session,
    clients: HashMap<ClientId, Arc<ClientQueue>>,
    seq: u64,
    inbound: SyncSender<Inbound>,
    backend: BackendKind,
    max_iterations: usize,
    task_running: bool,
    task_reply: Option<mpsc::Sender<Result<SkillOutcome, SkillError>>>,
    pending_steps: u64,
}

impl TickLoop {
    fn send(&mut self, out: Outgoing) {
        self.seq += 1;
        let is_state = out.message.is_state();
        let text = Envelope::new(self.seq, out.message).to_json();
        match out.to {
            Some(id) => {
                if let Some(q) = self.clients.get(&id) {
                    q.push(is_state, text);
                }
            }
            None => {
                for q in self.clients.values() {
                    q.push(is_state, text.clone());
                }
            }
        }
    }

    fn deliver(&mut self, report: crate::session::Report) {
        for m in report.messages {
            self.send(m);
        }
        if let Some(outcome) = report.task_outcome {
            if let Some(reply) = self.task_reply.take() {
                reply.send(Ok(outcome)).ok();
            }
        }
    }

    fn busy(&self) -> bool {
        self.session.rt.is_busy() || self.pending_steps > 0
    }

    fn tick(&mut self) {
        self.pending_steps = self.pending_steps.saturating_sub(1);
        let report = self.session.tick();
        self.deliver(report);
    }

    fn start_task(&mut self, id: ClientId, text: String, backend: Option<String>) {
        let refuse = if self.session.teleop_active() {
            Some((ErrorCode::TeleopActive, "instructions are refused during teleop"))
        } else if self.task_running {
            Some((ErrorCode::TaskActive, "an instruction is already being carried out"))
        } else if self.session.rt.is_busy() {
            Some((ErrorCode::SkillActive, "a skill is running"))
        } else {
            None
        };
        if let Some((code, why)) = refuse {
            self.send(Outgoing::to(id, ServerMessage::error(code, why)));
            return;
        }
        let mut backend: Box<dyn Backend + Send> = match backend.as_deref() {
            None => match &self.backend {
                BackendKind::Scripted => Box::new(ScriptedBackend::new()),
                BackendKind::Llm(c) => Box::new(LlmBackend::new(c.clone())),
            },
            Some("scripted") => Box::new(ScriptedBackend::new()),
            Some("llm") => Box::new(LlmBackend::new(match &self.backend {
                BackendKind::Llm(c) => c.clone(),
                BackendKind::Scripted => self.session.rt.cfg.llm.clone(),
            })),
            Some(other) => {
                self.send(Outgoing::to(id, ServerMessage::error(ErrorCode::UnknownBackend, format!("unknown backend `{other}`"))));
                return;
            }
        };
        self.task_running = true;
        let inbound = self.inbound.clone();
        let max_iterations = self.max_iterations;
        std::thread::spawn(move || {
            let mut exec = ChannelExecutor { inbound: inbound.clone() };
            let trace = inbound.clone();
            let (result, _) = run_task_with(&text, backend.as_mut(), &mut exec, max_iterations, None, |turn| {
                let error = match &turn.result {
                    TurnResult::Rejected { error } => Some(error.to_string()),
                    _ => None,
                };
                let msg = ServerMessage::LlmTrace { iteration: turn.iteration, reasoning: turn.reasoning.clone(), call: turn.call.clone(), error };
                trace.send(Inbound::Broadcast(msg)).ok();
            });
            inbound.send(Inbound::Broadcast(ServerMessage::TaskDone { result })).ok();
            inbound.send(Inbound::TaskFinished).ok();
        });
    }

    /// Returns false on shutdown.
    fn process(&mut self, msg: Inbound) -> bool {
        match msg {
            Inbound::Connect { id, queue } => {
                self.clients.insert(id, queue);
                let state = ServerMessage::State(self.session.state());
                self.send(Outgoing::to(id, state));
            }
            Inbound::Disconnect { id } => {
                self.clients.remove(&id);
                self.session.disconnect(id);
            }
            Inbound::Client { id, message } => match message {
                ClientMessage::Instruction { text, backend } => self.start_task(id, text, backend),
                ClientMessage::Step { ticks } => self.pending_steps += ticks,
                other => {
                    let report = self.session.handle(id, other);
                    self.deliver(report);
                }
            },
            Inbound::Reply { id, message } => self.send(Outgoing::to(id, message)),
            Inbound::Snapshot(reply) => {
                let rt = &self.session.rt;
                let snap = Snapshot { scene: rt.scene.clone(), observation: rt.observation(), time: rt.time(), tick: rt.tick_count() };
                reply.send(snap).ok();
            }
            Inbound::Execute(call, reply) => match self.session.start_task_skill(call) {
                Ok(()) => self.task_reply = Some(reply),
                Err(e) => {
                    reply.send(Err(e)).ok();
                }
            },
            Inbound::Broadcast(m) => self.send(Outgoing::all(m)),
            Inbound::TaskFinished => self.task_running = false,
            Inbound::Shutdown => return false,
        }
        true
    }

    fn run(mut self, rx: Receiver<Inbound>, lockstep: bool) {
        let dt = Duration::from_secs_f64(self.session.rt.cfg.timestep);
        let mut next = Instant::now();
        loop {
            if lockstep && !self.busy() {
                match rx.recv() {
                    Ok(m) => {
                        if !self.process(m) {
                            return;
                        }
                    }
                    Err(_) => return,
                }
                continue;
            }
            loop {
                match rx.try_recv() {
                    Ok(m) => {
                        if !self.process(m) {
                            return;
                        }
                    }
                    Err(mpsc::TryRecvError::Empty) => break,
                    Err(mpsc::TryRecvError::Disconnected) => return,
                }
            }
            if lockstep && !self.busy() {
                continue;
            }
            self.tick();
            if !lockstep {
                next += dt;
                // wait for the next period, still serving requests
                loop {
                    let now = Instant::now();
                    if now >= next {
                        if now > next + dt * 10 {
                            next = now;
                        }
                        break;
                    }
                    match rx.recv_timeout(next - now) {
                        Ok(m) => {
                            if !self.process(m) {
                                return;
                            }
                        }
                        Err(RecvTimeoutError::Timeout) => break,
                        Err(RecvTimeoutError::Disconnected) => return,
                    }
                }
            }
        }
    }
}

/// Runs skills for a task by asking the tick loop.
struct ChannelExecutor {
    inbound: SyncSender<Inbound>,
}

impl ChannelExecutor {
    fn snapshot(&self) -> Snapshot {
        let (tx, rx) = mpsc::channel();
        self.inbound.send(Inbound::Snapshot(tx)).expect("tick loop alive");
        rx.recv().expect("tick loop alive")
    }
}

impl Executor for ChannelExecutor {
    fn scene(&self) -> Scene {
        self.snapshot().scene
    }

    fn observation(&self) -> Observation {
        self.snapshot().observation
    }

    fn time(&self) -> f64 {
        self.snapshot().time
    }

    fn tick(&self) -> u64 {
        self.snapshot().tick
    }

    fn execute(&mut self, call: SkillCall) -> Result<SkillOutcome, SkillError> {
        let (tx, rx) = mpsc::channel();
        self.inbound.send(Inbound::Execute(call, tx)).map_err(|_| SkillError::Busy)?;
        rx.recv().map_err(|_| SkillError::Busy)?
    }
}

/// Handle to a running tick loop.
pub struct TickHandle {
    pub inbound: SyncSender<Inbound>,
    thread: Option<JoinHandle<()>>,
}

impl TickHandle {
    pub fn shutdown(mut self) {
        self.inbound.send(Inbound::Shutdown).ok();
        if let Some(t) = self.thread.take() {
            t.join().ok();
        }
    }
}

pub fn spawn_tick_loop(opts: &ServerOptions) -> TickHandle {
    let (tx, rx) = mpsc::sync_channel(opts.inbound_queue);
    let rt = Runtime::new(opts.cfg.clone(), opts.scene.clone());
    let tl = TickLoop {
        session: Session::new(rt),
        clients: HashMap::new(),
        seq: 0,
        inbound: tx.clone(),
        backend: opts.backend.clone(),
        max_iterations: opts.cfg.max_iterations,
        task_running: false,
        task_reply: None,
        pending_steps: 0,
    };
    let lockstep = opts.lockstep;
    let thread = std::thread::Builder::new().name("tick".into()).spawn(move || tl.run(rx, lockstep)).expect("spawn tick thread");
    TickHandle { inbound: tx, thread: Some(thread) }
}

#[derive(Clone)]
struct AppState {
    inbound: SyncSender<Inbound>,
    next_id: Arc<AtomicU64>,
    client_queue: usize,
}

/// The websocket endpoint is `/ws`.
pub fn router(inbound: SyncSender<Inbound>, client_queue: usize) -> Router {
    let state = AppState { inbound, next_id: Arc::new(AtomicU64::new(1)), client_queue };
    Router::new().route("/ws", get(upgrade)).with_state(state)
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, app))
}

async fn client(socket: WebSocket, app: AppState) {
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    let queue = Arc::new(ClientQueue::new(app.client_queue));
    if app.inbound.try_send(Inbound::Connect { id, queue: queue.clone() }).is_err() {
        return;
    }
    let (mut sink, mut stream) = socket.split();
    let writer_queue = queue.clone();
    let writer = tokio::spawn(async move {
        loop {
            let batch = writer_queue.drain();
            if batch.is_empty() {
                writer_queue.wait().await;
                continue;
            }
            for text in batch {
                if sink.send(Message::Text(text.into())).await.is_err() {
                    return;
                }
            }
        }
    });
    while let Some(Ok(frame)) = stream.next().await {
        let inbound = match frame {
            Message::Text(t) => match parse_client(t.as_str()) {
                Ok(message) => Inbound::Client { id, message },
                Err(message) => Inbound::Reply { id, message },
            },
            Message::Binary(_) => Inbound::Reply { id, message: ServerMessage::error(ErrorCode::BadMessage, "binary frames are not used") },
            Message::Close(_) => break,
            _ => continue,
        };
        if let Err(TrySendError::Full(_)) = app.inbound.try_send(inbound) {
            // the tick loop is saturated; the command is lost and the client is told
            let text = Envelope::new(0, ServerMessage::error(ErrorCode::Busy, "server queue full")).to_json();
            queue.push(false, text);
        }
    }
    app.inbound.send(Inbound::Disconnect { id }).ok();
    writer.abort();
}

/// Serves until the listener fails. The tick loop stops with it.
pub async fn serve(listener: tokio::net::TcpListener, opts: ServerOptions) -> std::io::Result<()> {
    let handle = spawn_tick_loop(&opts);
    let app = router(handle.inbound.clone(), opts.client_queue);
    let result = axum::serve(listener, app).await;
    handle.shutdown();
    result
}
