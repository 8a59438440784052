//! Framing: a 4-byte big-endian length, then one JSON object.
//!
//! Every object carries `protocol_version` and a `kind` naming the message.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hmi::gateway::{Ack, OperatorCommand};
use crate::hmi::snapshot::{Delta, LayoutSnapshot};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME_BYTES: usize = 16 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    Hello {
        peer: String,
    },
    SnapshotRequest,
    Snapshot {
        snapshot: Box<LayoutSnapshot>,
    },
    /// Answered with a snapshot, then deltas continuing from it.
    Subscribe,
    Delta {
        delta: Box<Delta>,
    },
    Command {
        command_id: String,
        command: OperatorCommand,
    },
    Ack {
        ack: Ack,
    },
    Error {
        message: String,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::SnapshotRequest => "snapshot_request",
            Message::Snapshot { .. } => "snapshot",
            Message::Subscribe => "subscribe",
            Message::Delta { .. } => "delta",
            Message::Command { .. } => "command",
            Message::Ack { .. } => "ack",
            Message::Error { .. } => "error",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    protocol_version: u32,
    #[serde(flatten)]
    message: Message,
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_BYTES} byte limit")]
    TooLarge(usize),
    #[error("malformed message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported protocol_version {0:?}, expected {PROTOCOL_VERSION}")]
    Version(Option<u64>),
}

pub fn encode(message: &Message) -> Result<Vec<u8>, CodecError> {
    let body = serde_json::to_vec(&Envelope { protocol_version: PROTOCOL_VERSION, message: message.clone() })?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(CodecError::TooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn write_message<W: Write>(out: &mut W, message: &Message) -> Result<(), CodecError> {
    out.write_all(&encode(message)?)?;
    out.flush()?;
    Ok(())
}

/// Reads one message. `Ok(None)` on a clean end of stream between frames.
pub fn read_message<R: Read>(input: &mut R) -> Result<Option<Message>, CodecError> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(CodecError::TooLarge(len));
    }
    let mut body = vec![0u8; len];
    input.read_exact(&mut body)?;
    decode(&body).map(Some)
}

/// Parses a frame body, checking the version before the message itself.
pub fn decode(body: &[u8]) -> Result<Message, CodecError> {
    let value: serde_json::Value = serde_json::from_slice(body)?;
    match value.get("protocol_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        other => return Err(CodecError::Version(other)),
    }
    let envelope: Envelope = serde_json::from_value(value)?;
    Ok(envelope.message)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_framing() {
        let m = Message::Command { command_id: "c1".into(), command: OperatorCommand::Step { ms: 100 } };
        let bytes = encode(&m).unwrap();
        assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize, bytes.len() - 4);
        let text = std::str::from_utf8(&bytes[4..]).unwrap();
        assert!(text.contains("\"protocol_version\":1") && text.contains("\"kind\":\"command\""));
        assert_eq!(read_message(&mut &bytes[..]).unwrap(), Some(m));
        assert_eq!(read_message(&mut &[][..]).unwrap(), None);
    }

    #[test]
    fn unit_kinds_round_trip() {
        for m in [Message::SnapshotRequest, Message::Subscribe] {
            let bytes = encode(&m).unwrap();
            assert_eq!(decode(&bytes[4..]).unwrap(), m);
        }
    }

    #[test]
    fn rejects_wrong_version_and_oversize() {
        let body = br#"{"protocol_version":2,"kind":"subscribe"}"#;
        assert!(matches!(decode(body), Err(CodecError::Version(Some(2)))));
        assert!(matches!(decode(br#"{"kind":"subscribe"}"#), Err(CodecError::Version(None))));
        let mut huge = ((MAX_FRAME_BYTES + 1) as u32).to_be_bytes().to_vec();
        huge.extend_from_slice(b"{}");
        assert!(matches!(read_message(&mut &huge[..]), Err(CodecError::TooLarge(_))));
    }
}
