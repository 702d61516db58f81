//! TCP server around the coordinator state machine. All connection events
//! funnel through one mpsc channel into a single owner loop, so state
//! transitions apply one at a time.

use super::state::{Action, CoordinatorState, Event};
use super::{frame, Message};
use crate::bundle::Bundle;
use crate::engine::{JobError, JobSpec, Runner, Task, TaskOutcome, TaskResult};
use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    /// Address to listen on, e.g. "0.0.0.0:7411". Port 0 picks a free port.
    pub bind: String,
    /// Assignments start once this many workers have joined.
    pub expected_workers: usize,
    /// In-flight tasks past this age are requeued.
    pub task_deadline: Duration,
    /// Expected worker heartbeat cadence.
    pub heartbeat_interval: Duration,
    /// Consecutive missed heartbeats before a worker counts as dead.
    pub missed_heartbeats: u32,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            bind: format!("0.0.0.0:{}", super::DEFAULT_PORT),
            expected_workers: 1,
            task_deadline: Duration::from_secs(30),
            heartbeat_interval: Duration::from_secs(5),
            missed_heartbeats: 3,
        }
    }
}

/// Connection-id keyed events from reader threads.
enum IoEvent {
    Frame(u64, u8, Vec<u8>),
    Closed(u64),
}

struct Connection {
    stream: Arc<Mutex<TcpStream>>,
    worker_id: Option<u64>,
    last_heard: Instant,
}

type ConnMap = Arc<Mutex<HashMap<u64, Connection>>>;

/// A bound coordinator listener, ready to serve one job.
pub struct CoordinatorServer {
    listener: TcpListener,
    local_addr: SocketAddr,
    cfg: CoordinatorConfig,
    joined: AtomicUsize,
}

impl CoordinatorServer {
    pub fn bind(cfg: CoordinatorConfig) -> Result<Self, JobError> {
        let listener = TcpListener::bind(&cfg.bind)
            .map_err(|e| JobError::Backend(format!("bind {}: {e}", cfg.bind)))?;
        let local_addr = listener
            .local_addr()
            .map_err(|e| JobError::Backend(format!("local_addr: {e}")))?;
        Ok(Self { listener, local_addr, cfg, joined: AtomicUsize::new(0) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Serve the given tasks to connecting workers until all are done.
    pub fn serve(
        &self,
        bundle: &Bundle,
        spec: &JobSpec,
        tasks: &[Task],
    ) -> Result<Vec<TaskOutcome>, JobError> {
        let backend = |msg: String| JobError::Backend(msg);
        self.listener.set_nonblocking(true).map_err(|e| backend(e.to_string()))?;
        let spec_bytes = Arc::new(spec.to_bytes());
        let (tx, rx): (Sender<IoEvent>, Receiver<IoEvent>) = std::sync::mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let conns: ConnMap = Arc::new(Mutex::new(HashMap::new()));

        let accept_handle = {
            let listener = self.listener.try_clone().map_err(|e| backend(e.to_string()))?;
            let tx = tx.clone();
            let stop = Arc::clone(&stop);
            let conns = Arc::clone(&conns);
            std::thread::spawn(move || accept_loop(listener, tx, stop, conns))
        };

        let result = self.owner_loop(bundle, tasks, &spec_bytes, &rx, &conns);

        stop.store(true, Ordering::Relaxed);
        for (_, conn) in conns.lock().unwrap().drain() {
            if let Ok(stream) = conn.stream.lock() {
                let _ = stream.shutdown(std::net::Shutdown::Both);
            }
        }
        let _ = accept_handle.join();
        result
    }

    fn owner_loop(
        &self,
        bundle: &Bundle,
        tasks: &[Task],
        spec_bytes: &Arc<Vec<u8>>,
        rx: &Receiver<IoEvent>,
        conns: &ConnMap,
    ) -> Result<Vec<TaskOutcome>, JobError> {
        let mut state = CoordinatorState::new(tasks.to_vec(), self.cfg.expected_workers);
        let mut worker_conns: HashMap<u64, u64> = HashMap::new(); // worker_id -> conn_id
        let mut assigned_at: HashMap<u64, Instant> = HashMap::new(); // task_id -> assignment time
        let heartbeat_limit = self.cfg.heartbeat_interval * self.cfg.missed_heartbeats;

        while !state.is_complete() {
            let mut events: VecDeque<Event> = VecDeque::new();

            // synthesize timeouts
            let now = Instant::now();
            for (task_id, at) in assigned_at.iter() {
                if now.duration_since(*at) > self.cfg.task_deadline {
                    events.push_back(Event::DeadlineElapsed { task_id: *task_id });
                }
            }
            {
                let guard = conns.lock().unwrap();
                for conn in guard.values() {
                    if let Some(worker_id) = conn.worker_id {
                        if now.duration_since(conn.last_heard) > heartbeat_limit {
                            events.push_back(Event::WorkerDisconnected { worker_id });
                        }
                    }
                }
            }

            if events.is_empty() {
                match rx.recv_timeout(Duration::from_millis(50)) {
                    Ok(io_event) => {
                        if let Some(ev) = translate(io_event, conns, &mut worker_conns) {
                            events.push_back(ev);
                        }
                    }
                    Err(std::sync::mpsc::RecvTimeoutError::Timeout) => {}
                    Err(std::sync::mpsc::RecvTimeoutError::Disconnected) => {
                        return Err(JobError::Backend("event channel closed".into()));
                    }
                }
            }

            while let Some(event) = events.pop_front() {
                if let Event::WorkerDisconnected { worker_id } = &event {
                    if let Some(conn_id) = worker_conns.remove(worker_id) {
                        drop_conn(conns, conn_id);
                    }
                }
                let mut actions: VecDeque<Action> = state.step(event).into();
                while let Some(action) = actions.pop_front() {
                    match action {
                        Action::Ack { worker_id, accepted } => {
                            if let Some(&conn_id) = worker_conns.get(&worker_id) {
                                let ok =
                                    send_to(conns, conn_id, &Message::HelloAck { accepted }.encode());
                                if !ok {
                                    worker_conns.remove(&worker_id);
                                    drop_conn(conns, conn_id);
                                    actions.extend(
                                        state.step(Event::WorkerDisconnected { worker_id }),
                                    );
                                }
                            }
                        }
                        Action::Assign { worker_id, task } => {
                            let shipped = worker_conns.get(&worker_id).copied().and_then(|conn_id| {
                                let (format, image_bytes) =
                                    bundle.read_payload(task.entry_index).ok()?;
                                let msg = Message::TaskAssign {
                                    task_id: task.task_id,
                                    entry_index: task.entry_index,
                                    attempt: task.attempt,
                                    job_spec_bytes: spec_bytes.as_ref().clone(),
                                    image_format: format.code(),
                                    image_bytes,
                                };
                                send_to(conns, conn_id, &msg.encode()).then_some(())
                            });
                            match shipped {
                                Some(()) => {
                                    assigned_at.insert(task.task_id, Instant::now());
                                }
                                None => {
                                    // could not ship: treat this worker as gone
                                    if let Some(conn_id) = worker_conns.remove(&worker_id) {
                                        drop_conn(conns, conn_id);
                                    }
                                    actions.extend(
                                        state.step(Event::WorkerDisconnected { worker_id }),
                                    );
                                }
                            }
                        }
                        Action::Disconnect { worker_id, .. } => {
                            if let Some(conn_id) = worker_conns.remove(&worker_id) {
                                drop_conn(conns, conn_id);
                            }
                        }
                    }
                }
                // deadlines are meaningful only for tasks still in flight
                let live: std::collections::HashSet<u64> = state.in_flight_ids().into_iter().collect();
                assigned_at.retain(|task_id, _| live.contains(task_id));
            }

            self.joined.store(state.joined_total(), Ordering::Relaxed);
            if state.joined_total() > 0 && state.live_workers() == 0 && !state.is_complete() {
                return Err(JobError::Backend(
                    "all workers disconnected with tasks remaining".into(),
                ));
            }
        }

        let conn_ids: Vec<u64> = conns.lock().unwrap().keys().copied().collect();
        for conn_id in conn_ids {
            send_to(conns, conn_id, &Message::Shutdown.encode());
        }
        Ok(state.into_outcomes())
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<IoEvent>, stop: Arc<AtomicBool>, conns: ConnMap) {
    let mut next_conn = 1u64;
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _addr)) => {
                let conn_id = next_conn;
                next_conn += 1;
                stream.set_nodelay(true).ok();
                stream.set_nonblocking(false).ok();
                let reader = match stream.try_clone() {
                    Ok(r) => r,
                    Err(_) => continue,
                };
                conns.lock().unwrap().insert(
                    conn_id,
                    Connection {
                        stream: Arc::new(Mutex::new(stream)),
                        worker_id: None,
                        last_heard: Instant::now(),
                    },
                );
                let tx = tx.clone();
                std::thread::spawn(move || {
                    let mut reader = reader;
                    loop {
                        match frame::read_frame(&mut reader) {
                            Ok((t, payload)) => {
                                if tx.send(IoEvent::Frame(conn_id, t, payload)).is_err() {
                                    break;
                                }
                            }
                            Err(_) => {
                                let _ = tx.send(IoEvent::Closed(conn_id));
                                break;
                            }
                        }
                    }
                });
            }
            Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(_) => break,
        }
    }
}

fn send_to(conns: &ConnMap, conn_id: u64, bytes: &[u8]) -> bool {
    let stream = {
        let guard = conns.lock().unwrap();
        match guard.get(&conn_id) {
            Some(c) => Arc::clone(&c.stream),
            None => return false,
        }
    };
    let mut s = stream.lock().unwrap();
    s.write_all(bytes).and_then(|_| s.flush()).is_ok()
}

fn drop_conn(conns: &ConnMap, conn_id: u64) {
    if let Some(conn) = conns.lock().unwrap().remove(&conn_id) {
        if let Ok(stream) = conn.stream.lock() {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
    }
}

/// Map a raw connection event to a state-machine event.
fn translate(
    io_event: IoEvent,
    conns: &ConnMap,
    worker_conns: &mut HashMap<u64, u64>,
) -> Option<Event> {
    match io_event {
        IoEvent::Closed(conn_id) => {
            let worker_id = conns.lock().unwrap().remove(&conn_id).and_then(|c| c.worker_id)?;
            if worker_conns.get(&worker_id) == Some(&conn_id) {
                worker_conns.remove(&worker_id);
                Some(Event::WorkerDisconnected { worker_id })
            } else {
                None
            }
        }
        IoEvent::Frame(conn_id, msg_type_byte, payload) => {
            {
                let mut guard = conns.lock().unwrap();
                let conn = guard.get_mut(&conn_id)?;
                conn.last_heard = Instant::now();
            }
            let msg = match Message::decode_parts(msg_type_byte, &payload) {
                Ok(m) => m,
                Err(_) => {
                    // protocol garbage: drop the connection
                    let worker_id =
                        conns.lock().unwrap().remove(&conn_id).and_then(|c| c.worker_id);
                    let worker_id = worker_id?;
                    if worker_conns.get(&worker_id) == Some(&conn_id) {
                        worker_conns.remove(&worker_id);
                        return Some(Event::WorkerDisconnected { worker_id });
                    }
                    return None;
                }
            };
            match msg {
                Message::Hello { worker_id, protocol_version } => {
                    if worker_conns.contains_key(&worker_id) {
                        // random-id collision with a live worker: refuse
                        // the newcomer without disturbing the incumbent
                        drop_conn(conns, conn_id);
                        return None;
                    }
                    if let Some(conn) = conns.lock().unwrap().get_mut(&conn_id) {
                        conn.worker_id = Some(worker_id);
                    }
                    worker_conns.insert(worker_id, conn_id);
                    Some(Event::WorkerJoined { worker_id, protocol_version })
                }
                Message::Heartbeat => None,
                Message::TaskResult { task_id, attempt, result_bytes } => {
                    let worker_id = worker_of(conns, conn_id)?;
                    match TaskResult::from_bytes(&result_bytes) {
                        Ok(result) => {
                            Some(Event::ResultReceived { worker_id, task_id, attempt, result })
                        }
                        Err(_) => {
                            worker_conns.remove(&worker_id);
                            drop_conn(conns, conn_id);
                            Some(Event::WorkerDisconnected { worker_id })
                        }
                    }
                }
                Message::TaskError { task_id, attempt, reason } => {
                    let worker_id = worker_of(conns, conn_id)?;
                    Some(Event::ErrorReceived { worker_id, task_id, attempt, reason })
                }
                // workers never send these
                Message::HelloAck { .. } | Message::TaskAssign { .. } | Message::Shutdown => None,
            }
        }
    }
}

fn worker_of(conns: &ConnMap, conn_id: u64) -> Option<u64> {
    conns.lock().unwrap().get(&conn_id).and_then(|c| c.worker_id)
}

impl Runner for CoordinatorServer {
    fn run(&self, bundle: &Bundle, spec: &JobSpec, tasks: &[Task]) -> Result<Vec<TaskOutcome>, JobError> {
        self.serve(bundle, spec, tasks)
    }

    fn worker_count(&self) -> usize {
        self.joined.load(Ordering::Relaxed).max(1)
    }
}
