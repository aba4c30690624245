//! Wire protocol between the service and cockpit clients.
//!
//! One persistent duplex TCP connection per client. Each message is a UTF-8
//! JSON document preceded by its byte length as a 4-byte big-endian integer.
//! Every document has a `type` field: `input` from clients; `state`, `event`
//! and `error` from the service.

use crate::session::{InputFrame, SessionEvent, StateFrame};
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};

pub const MAX_MESSAGE_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Input(InputFrame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Pilot,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum ServiceEvent {
    Connected { client_id: u64, role: Role },
    PilotDisconnected { client_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventMessage {
    Session(SessionEvent),
    Service(ServiceEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    State(StateFrame),
    Event(EventMessage),
    Error { reason: String },
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len =
        u32::try_from(payload.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "message too long"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// What came off the wire.
#[derive(Debug)]
pub enum Frame {
    Message(Vec<u8>),
    /// Declared length over [`MAX_MESSAGE_BYTES`]; the body was skipped.
    Oversized(usize),
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_MESSAGE_BYTES {
        io::copy(&mut r.take(len as u64), &mut io::sink())?;
        return Ok(Some(Frame::Oversized(len)));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(Frame::Message(buf)))
}

pub fn encode(msg: &ServerMessage) -> Vec<u8> {
    serde_json::to_vec(msg).expect("server messages always serialize")
}

/// Parses a client message, checking value ranges.
pub fn decode_client(bytes: &[u8]) -> Result<ClientMessage, String> {
    let msg: ClientMessage = serde_json::from_slice(bytes).map_err(|e| format!("malformed message: {e}"))?;
    match &msg {
        ClientMessage::Input(f) => f.validate()?,
    }
    Ok(msg)
}
