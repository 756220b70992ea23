//! Message transports: line-framed STDIO-style channels and an HTTP POST
//! client. Decode failures arrive as in-band values, never as channel
//! death; a closed peer is its own signal.

use std::io::{BufRead, Write};
use std::time::Duration;

use thiserror::Error;

use super::httpc;
use super::mcp::{mcp_decode, mcp_encode, McpDecodeError, McpMessage};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("channel closed by peer")]
    Closed,
    #[error("transport io error: {0}")]
    Io(String),
    #[error("http status {0} from peer")]
    HttpStatus(u16),
    #[error("no response pending; send a message first")]
    NothingPending,
}

/// What a receive produced: a protocol message, or bytes that failed to
/// decode (reported in-band so one bad frame cannot kill the channel).
#[derive(Debug)]
pub enum Incoming {
    Message(McpMessage),
    Malformed(McpDecodeError),
}

/// A bidirectional message channel.
pub trait Transport {
    fn send(&mut self, message: &McpMessage) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Incoming, TransportError>;
}

/// Line framing over any reader/writer pair: one JSON message per line.
/// JSON string escaping keeps embedded newlines from splitting frames.
pub struct LineTransport<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> LineTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader, writer }
    }
}

impl<R: BufRead, W: Write> Transport for LineTransport<R, W> {
    fn send(&mut self, message: &McpMessage) -> Result<(), TransportError> {
        let mut frame = mcp_encode(message);
        frame.push(b'\n');
        self.writer.write_all(&frame).map_err(|e| TransportError::Io(e.to_string()))?;
        self.writer.flush().map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Incoming, TransportError> {
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| TransportError::Io(e.to_string()))?;
        if n == 0 {
            return Err(TransportError::Closed);
        }
        match mcp_decode(line.trim_end_matches(['\r', '\n']).as_bytes()) {
            Ok(message) => Ok(Incoming::Message(message)),
            Err(e) => Ok(Incoming::Malformed(e)),
        }
    }
}

/// HTTP transport: each sent message is one POST with a JSON body; the
/// response body is queued for the next `recv`. A non-2xx status is a
/// transport error, distinct from any protocol-level error object.
pub struct HttpClientTransport {
    pub host: String,
    pub port: u16,
    pub path: String,
    pub timeout: Duration,
    pending: Vec<Vec<u8>>,
}

impl HttpClientTransport {
    pub fn new(host: impl Into<String>, port: u16, path: impl Into<String>) -> Self {
        Self {
            host: host.into(),
            port,
            path: path.into(),
            timeout: Duration::from_secs(30),
            pending: Vec::new(),
        }
    }
}

impl Transport for HttpClientTransport {
    fn send(&mut self, message: &McpMessage) -> Result<(), TransportError> {
        let body = mcp_encode(message);
        let response = httpc::post(
            &self.host,
            self.port,
            &self.path,
            "application/json",
            std::str::from_utf8(&body).expect("encoded messages are utf-8"),
            &[],
            self.timeout,
        )
        .map_err(|e| match e {
            httpc::HttpError::Connect(m) => TransportError::Io(m),
            other => TransportError::Io(other.to_string()),
        })?;
        if !(200..300).contains(&response.status) {
            return Err(TransportError::HttpStatus(response.status));
        }
        self.pending.push(response.body.into_bytes());
        Ok(())
    }

    fn recv(&mut self) -> Result<Incoming, TransportError> {
        if self.pending.is_empty() {
            return Err(TransportError::NothingPending);
        }
        let bytes = self.pending.remove(0);
        match mcp_decode(&bytes) {
            Ok(message) => Ok(Incoming::Message(message)),
            Err(e) => Ok(Incoming::Malformed(e)),
        }
    }
}
