//! Frame layer: u32 big-endian length (of type byte + payload), u8 message
//! type, payload bytes. Frames above 64 MiB are rejected before allocation.

use super::ProtoError;
use std::io::{Read, Write};

pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

/// Serialize one frame.
pub fn encode_frame(msg_type: u8, payload: &[u8]) -> Vec<u8> {
    let len = 1 + payload.len() as u32;
    debug_assert!(len <= MAX_FRAME_LEN);
    let mut out = Vec::with_capacity(4 + len as usize);
    out.extend_from_slice(&len.to_be_bytes());
    out.push(msg_type);
    out.extend_from_slice(payload);
    out
}

pub fn write_frame(w: &mut impl Write, msg_type: u8, payload: &[u8]) -> std::io::Result<()> {
    let len = 1 + payload.len() as u32;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&[msg_type])?;
    w.write_all(payload)?;
    w.flush()
}

/// Read one frame; returns (msg_type, payload).
pub fn read_frame(r: &mut impl Read) -> Result<(u8, Vec<u8>), ProtoError> {
    let mut len_bytes = [0u8; 4];
    read_exact_or_eof(r, &mut len_bytes)?;
    let len = u32::from_be_bytes(len_bytes);
    if len == 0 {
        return Err(ProtoError::EmptyFrame);
    }
    if len > MAX_FRAME_LEN {
        return Err(ProtoError::Oversize(len));
    }
    let mut type_byte = [0u8; 1];
    read_exact_or_eof(r, &mut type_byte)?;
    let mut payload = vec![0u8; len as usize - 1];
    read_exact_or_eof(r, &mut payload)?;
    Ok((type_byte[0], payload))
}

fn read_exact_or_eof(r: &mut impl Read, buf: &mut [u8]) -> Result<(), ProtoError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ProtoError::UnexpectedEof
        } else {
            ProtoError::Io(e)
        }
    })
}
