//! Protocol messages and their payload layouts. Integers inside payloads are
//! little-endian (the frame length alone is big-endian); strings are
//! u16-length-prefixed UTF-8.

use super::{frame, msg_type, ProtoError};
use crate::engine::wire::ByteReader;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello { worker_id: u64, protocol_version: u16 },
    HelloAck { accepted: bool },
    TaskAssign {
        task_id: u64,
        entry_index: u32,
        attempt: u32,
        job_spec_bytes: Vec<u8>,
        image_format: u8,
        image_bytes: Vec<u8>,
    },
    TaskResult { task_id: u64, attempt: u32, result_bytes: Vec<u8> },
    TaskError { task_id: u64, attempt: u32, reason: String },
    Heartbeat,
    Shutdown,
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Hello { .. } => msg_type::HELLO,
            Message::HelloAck { .. } => msg_type::HELLO_ACK,
            Message::TaskAssign { .. } => msg_type::TASK_ASSIGN,
            Message::TaskResult { .. } => msg_type::TASK_RESULT,
            Message::TaskError { .. } => msg_type::TASK_ERROR,
            Message::Heartbeat => msg_type::HEARTBEAT,
            Message::Shutdown => msg_type::SHUTDOWN,
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Hello { worker_id, protocol_version } => {
                out.extend_from_slice(&worker_id.to_le_bytes());
                out.extend_from_slice(&protocol_version.to_le_bytes());
            }
            Message::HelloAck { accepted } => out.push(u8::from(*accepted)),
            Message::TaskAssign {
                task_id,
                entry_index,
                attempt,
                job_spec_bytes,
                image_format,
                image_bytes,
            } => {
                out.extend_from_slice(&task_id.to_le_bytes());
                out.extend_from_slice(&entry_index.to_le_bytes());
                out.extend_from_slice(&attempt.to_le_bytes());
                out.extend_from_slice(&(job_spec_bytes.len() as u32).to_le_bytes());
                out.extend_from_slice(job_spec_bytes);
                out.push(*image_format);
                out.extend_from_slice(&(image_bytes.len() as u64).to_le_bytes());
                out.extend_from_slice(image_bytes);
            }
            Message::TaskResult { task_id, attempt, result_bytes } => {
                out.extend_from_slice(&task_id.to_le_bytes());
                out.extend_from_slice(&attempt.to_le_bytes());
                out.extend_from_slice(result_bytes);
            }
            Message::TaskError { task_id, attempt, reason } => {
                out.extend_from_slice(&task_id.to_le_bytes());
                out.extend_from_slice(&attempt.to_le_bytes());
                let bytes = reason.as_bytes();
                let len = bytes.len().min(u16::MAX as usize);
                out.extend_from_slice(&(len as u16).to_le_bytes());
                out.extend_from_slice(&bytes[..len]);
            }
            Message::Heartbeat | Message::Shutdown => {}
        }
        out
    }

    /// Full frame bytes for this message.
    pub fn encode(&self) -> Vec<u8> {
        frame::encode_frame(self.msg_type(), &self.payload())
    }

    /// Parse a message from its type byte and payload.
    pub fn decode_parts(msg_type_byte: u8, payload: &[u8]) -> Result<Message, ProtoError> {
        let malformed = |field: &'static str, msg: String| ProtoError::Malformed { field, msg };
        let mut rd = ByteReader::new(payload);
        let msg = match msg_type_byte {
            msg_type::HELLO => Message::Hello {
                worker_id: rd.u64("worker_id").map_err(|e| malformed("HELLO", e.to_string()))?,
                protocol_version: rd
                    .u16("protocol_version")
                    .map_err(|e| malformed("HELLO", e.to_string()))?,
            },
            msg_type::HELLO_ACK => Message::HelloAck {
                accepted: rd.u8("accepted").map_err(|e| malformed("HELLO_ACK", e.to_string()))? != 0,
            },
            msg_type::TASK_ASSIGN => {
                let e = |e: crate::engine::WireError| malformed("TASK_ASSIGN", e.to_string());
                let task_id = rd.u64("task_id").map_err(e)?;
                let entry_index = rd.u32("entry_index").map_err(e)?;
                let attempt = rd.u32("attempt").map_err(e)?;
                let spec_len = rd.u32("job_spec length").map_err(e)? as usize;
                let job_spec_bytes = rd.take(spec_len, "job_spec bytes").map_err(e)?.to_vec();
                let image_format = rd.u8("image_format").map_err(e)?;
                let image_len = rd.u64("image length").map_err(e)? as usize;
                let image_bytes = rd.take(image_len, "image bytes").map_err(e)?.to_vec();
                if rd.remaining() != 0 {
                    return Err(malformed("TASK_ASSIGN", "trailing bytes".into()));
                }
                Message::TaskAssign {
                    task_id,
                    entry_index,
                    attempt,
                    job_spec_bytes,
                    image_format,
                    image_bytes,
                }
            }
            msg_type::TASK_RESULT => {
                let e = |e: crate::engine::WireError| malformed("TASK_RESULT", e.to_string());
                let task_id = rd.u64("task_id").map_err(e)?;
                let attempt = rd.u32("attempt").map_err(e)?;
                let result_bytes = rd.take(rd.remaining(), "result bytes").map_err(e)?.to_vec();
                Message::TaskResult { task_id, attempt, result_bytes }
            }
            msg_type::TASK_ERROR => {
                let e = |e: crate::engine::WireError| malformed("TASK_ERROR", e.to_string());
                let task_id = rd.u64("task_id").map_err(e)?;
                let attempt = rd.u32("attempt").map_err(e)?;
                let reason = rd.string("reason").map_err(e)?;
                if rd.remaining() != 0 {
                    return Err(malformed("TASK_ERROR", "trailing bytes".into()));
                }
                Message::TaskError { task_id, attempt, reason }
            }
            msg_type::HEARTBEAT => {
                if !payload.is_empty() {
                    return Err(malformed("HEARTBEAT", "payload must be empty".into()));
                }
                Message::Heartbeat
            }
            msg_type::SHUTDOWN => {
                if !payload.is_empty() {
                    return Err(malformed("SHUTDOWN", "payload must be empty".into()));
                }
                Message::Shutdown
            }
            other => return Err(ProtoError::UnknownType(other)),
        };
        Ok(msg)
    }

    /// Parse a message from full frame bytes (the inverse of [`encode`]).
    ///
    /// [`encode`]: Message::encode
    pub fn decode(bytes: &[u8]) -> Result<Message, ProtoError> {
        let mut cursor = std::io::Cursor::new(bytes);
        let (t, payload) = frame::read_frame(&mut cursor)?;
        if cursor.position() as usize != bytes.len() {
            return Err(ProtoError::Malformed {
                field: "frame",
                msg: "trailing bytes after frame".into(),
            });
        }
        Message::decode_parts(t, &payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(msg: Message) {
        let bytes = msg.encode();
        assert_eq!(Message::decode(&bytes).unwrap(), msg);
    }

    #[test]
    fn every_variant_round_trips() {
        roundtrip(Message::Hello { worker_id: 0xDEAD_BEEF_u64, protocol_version: 1 });
        roundtrip(Message::HelloAck { accepted: true });
        roundtrip(Message::HelloAck { accepted: false });
        roundtrip(Message::TaskAssign {
            task_id: 5,
            entry_index: 5,
            attempt: 2,
            job_spec_bytes: vec![1, 2, 3],
            image_format: 2,
            image_bytes: vec![9; 100],
        });
        roundtrip(Message::TaskResult { task_id: 7, attempt: 0, result_bytes: vec![4, 5] });
        roundtrip(Message::TaskError { task_id: 9, attempt: 1, reason: "decode failed".into() });
        roundtrip(Message::Heartbeat);
        roundtrip(Message::Shutdown);
    }

    #[test]
    fn unknown_type_is_a_protocol_error() {
        let bytes = encode_unknown();
        assert!(matches!(Message::decode(&bytes), Err(ProtoError::UnknownType(200))));
    }

    fn encode_unknown() -> Vec<u8> {
        super::super::frame::encode_frame(200, b"x")
    }

    #[test]
    fn randomized_messages_round_trip() {
        let mut state = 0xABCD_1234_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..2000 {
            let r = next();
            let msg = match r % 7 {
                0 => Message::Hello { worker_id: next(), protocol_version: next() as u16 },
                1 => Message::HelloAck { accepted: next() % 2 == 0 },
                2 => Message::TaskAssign {
                    task_id: next(),
                    entry_index: next() as u32,
                    attempt: next() as u32 % 4,
                    job_spec_bytes: (0..(next() % 64)).map(|_| next() as u8).collect(),
                    image_format: (next() % 3 + 1) as u8,
                    image_bytes: (0..(next() % 256)).map(|_| next() as u8).collect(),
                },
                3 => Message::TaskResult {
                    task_id: next(),
                    attempt: next() as u32 % 4,
                    result_bytes: (0..(next() % 128)).map(|_| next() as u8).collect(),
                },
                4 => Message::TaskError {
                    task_id: next(),
                    attempt: next() as u32 % 4,
                    reason: format!("reason-{}", next() % 1000),
                },
                5 => Message::Heartbeat,
                _ => Message::Shutdown,
            };
            roundtrip(msg);
        }
    }
}
