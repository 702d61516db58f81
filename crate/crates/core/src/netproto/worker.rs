//! Worker loop: connect, HELLO, then execute TASK_ASSIGN frames until
//! SHUTDOWN. Image bytes arrive inside the assignment, so workers need no
//! filesystem access.

use super::{frame, Message, ProtoError, PROTOCOL_VERSION};
use crate::codec;
use crate::engine::{execute_task, JobSpec, Task};
use std::io::Write;
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    /// Coordinator address, host:port.
    pub connect: String,
    pub heartbeat_interval: Duration,
    /// Worker id announced in HELLO; random when `None`.
    pub worker_id: Option<u64>,
    /// Protocol version announced in HELLO (override for tests).
    pub protocol_version: u16,
}

impl WorkerConfig {
    pub fn new(connect: impl Into<String>) -> Self {
        Self {
            connect: connect.into(),
            heartbeat_interval: Duration::from_secs(5),
            worker_id: None,
            protocol_version: PROTOCOL_VERSION,
        }
    }
}

/// Run until SHUTDOWN. Returns the number of tasks executed.
pub fn run_worker(cfg: &WorkerConfig) -> Result<u64, ProtoError> {
    let stream = TcpStream::connect(&cfg.connect)?;
    stream.set_nodelay(true).ok();
    let mut reader = stream.try_clone()?;
    let writer = Arc::new(Mutex::new(stream));

    let worker_id = cfg.worker_id.unwrap_or_else(rand::random);
    send(&writer, &Message::Hello { worker_id, protocol_version: cfg.protocol_version })?;

    match read_message(&mut reader)? {
        Message::HelloAck { accepted: true } => {}
        Message::HelloAck { accepted: false } => return Err(ProtoError::Rejected),
        other => {
            return Err(ProtoError::Violation(format!(
                "expected HELLO_ACK, got type {}",
                other.msg_type()
            )))
        }
    }

    // heartbeats on their own thread; stops when the main loop exits
    let stop = Arc::new(AtomicBool::new(false));
    let heartbeat = {
        let writer = Arc::clone(&writer);
        let stop = Arc::clone(&stop);
        let interval = cfg.heartbeat_interval;
        std::thread::spawn(move || {
            while !stop.load(Ordering::Relaxed) {
                std::thread::sleep(interval);
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                if send(&writer, &Message::Heartbeat).is_err() {
                    break;
                }
            }
        })
    };

    let mut executed = 0u64;
    let outcome = loop {
        match read_message(&mut reader) {
            Ok(Message::TaskAssign {
                task_id,
                entry_index,
                attempt,
                job_spec_bytes,
                image_format: _,
                image_bytes,
            }) => {
                let reply = match handle_assignment(
                    task_id,
                    entry_index,
                    attempt,
                    &job_spec_bytes,
                    &image_bytes,
                ) {
                    Ok(result_bytes) => Message::TaskResult { task_id, attempt, result_bytes },
                    Err(reason) => Message::TaskError { task_id, attempt, reason },
                };
                executed += 1;
                if let Err(e) = send(&writer, &reply) {
                    break Err(ProtoError::Io(e));
                }
            }
            Ok(Message::Shutdown) => break Ok(executed),
            Ok(Message::Heartbeat) => {}
            Ok(other) => {
                break Err(ProtoError::Violation(format!(
                    "unexpected message type {}",
                    other.msg_type()
                )))
            }
            Err(e) => break Err(e),
        }
    };

    stop.store(true, Ordering::Relaxed);
    if let Ok(s) = writer.lock() {
        let _ = s.shutdown(std::net::Shutdown::Both);
    }
    let _ = heartbeat.join();
    outcome
}

fn handle_assignment(
    task_id: u64,
    entry_index: u32,
    attempt: u32,
    job_spec_bytes: &[u8],
    image_bytes: &[u8],
) -> Result<Vec<u8>, String> {
    let spec = JobSpec::from_bytes(job_spec_bytes)
        .map_err(|e| format!("job spec decode failed: {e}"))?;
    let img = codec::decode(image_bytes).map_err(|e| format!("image decode failed: {e}"))?;
    let task = Task { task_id, entry_index, attempt };
    let result = execute_task(&task, &img, &spec).map_err(|e| e.to_string())?;
    Ok(result.to_bytes())
}

fn send(writer: &Arc<Mutex<TcpStream>>, msg: &Message) -> std::io::Result<()> {
    let bytes = msg.encode();
    let mut s = writer.lock().unwrap();
    s.write_all(&bytes)?;
    s.flush()
}

fn read_message(reader: &mut TcpStream) -> Result<Message, ProtoError> {
    let (t, payload) = frame::read_frame(reader)?;
    Message::decode_parts(t, &payload)
}
