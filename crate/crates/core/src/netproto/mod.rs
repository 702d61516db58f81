//! Coordinator/worker wire protocol over TCP: length-prefixed frames carrying
//! task assignments (with image payloads pushed to the worker) and results.
//!
//! The coordinator's scheduling logic is a pure state machine ([`state`]);
//! the socket layers only shuttle events into it and frames out of it.

mod frame;
mod message;
pub mod state;

mod coordinator;
mod worker;

pub use coordinator::{CoordinatorConfig, CoordinatorServer};
pub use frame::{encode_frame, read_frame, write_frame, MAX_FRAME_LEN};
pub use message::Message;
pub use worker::{run_worker, WorkerConfig};

use thiserror::Error;

/// Protocol version spoken by this build.
pub const PROTOCOL_VERSION: u16 = 1;
/// Default coordinator TCP port.
pub const DEFAULT_PORT: u16 = 7411;

pub mod msg_type {
    pub const HELLO: u8 = 1;
    pub const HELLO_ACK: u8 = 2;
    pub const TASK_ASSIGN: u8 = 3;
    pub const TASK_RESULT: u8 = 4;
    pub const TASK_ERROR: u8 = 5;
    pub const HEARTBEAT: u8 = 6;
    pub const SHUTDOWN: u8 = 7;
}

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame length {0} exceeds the 64 MiB limit")]
    Oversize(u32),
    #[error("frame length must include the type byte")]
    EmptyFrame,
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("malformed {field}: {msg}")]
    Malformed { field: &'static str, msg: String },
    #[error("connection closed mid-frame")]
    UnexpectedEof,
    #[error("coordinator rejected the connection (protocol version mismatch?)")]
    Rejected,
    #[error("protocol violation: {0}")]
    Violation(String),
}
