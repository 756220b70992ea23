//! MCP messages over JSON-RPC 2.0: codec, error codes, capability
//! negotiation, and request-id correlation.

use std::collections::{BTreeMap, HashSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// JSON-RPC 2.0 error codes used on the wire.
pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;
pub const SERVER_ERROR: i64 = -32000;

/// Request identifier: integer or string per JSON-RPC 2.0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum McpId {
    Int(i64),
    Str(String),
}

impl From<i64> for McpId {
    fn from(v: i64) -> Self {
        McpId::Int(v)
    }
}

impl From<&str> for McpId {
    fn from(v: &str) -> Self {
        McpId::Str(v.to_string())
    }
}

/// The error member of an error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McpErrorObject {
    pub code: i64,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl McpErrorObject {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), data: None }
    }
}

/// One MCP message. Every encoded form carries `"jsonrpc": "2.0"`.
#[derive(Debug, Clone, PartialEq)]
pub enum McpMessage {
    Request { id: McpId, method: String, params: Option<Value> },
    Notification { method: String, params: Option<Value> },
    Response { id: McpId, result: Value },
    ErrorResponse { id: Option<McpId>, error: McpErrorObject },
}

impl McpMessage {
    pub fn request(id: impl Into<McpId>, method: impl Into<String>, params: Option<Value>) -> Self {
        McpMessage::Request { id: id.into(), method: method.into(), params }
    }
}

/// Decode failure classified with the matching JSON-RPC error code:
/// `-32700` for unparseable bytes, `-32600` for structurally invalid
/// messages.
#[derive(Debug, Clone, thiserror::Error)]
#[error("mcp decode error {code}: {message}")]
pub struct McpDecodeError {
    pub code: i64,
    pub message: String,
}

impl McpDecodeError {
    fn parse(message: impl Into<String>) -> Self {
        Self { code: PARSE_ERROR, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self { code: INVALID_REQUEST, message: message.into() }
    }
}

/// Encode a message to JSON bytes.
pub fn mcp_encode(message: &McpMessage) -> Vec<u8> {
    let value = match message {
        McpMessage::Request { id, method, params } => {
            let mut m = Map::new();
            m.insert("jsonrpc".into(), json!("2.0"));
            m.insert("id".into(), serde_json::to_value(id).unwrap());
            m.insert("method".into(), json!(method));
            if let Some(p) = params {
                m.insert("params".into(), p.clone());
            }
            Value::Object(m)
        }
        McpMessage::Notification { method, params } => {
            let mut m = Map::new();
            m.insert("jsonrpc".into(), json!("2.0"));
            m.insert("method".into(), json!(method));
            if let Some(p) = params {
                m.insert("params".into(), p.clone());
            }
            Value::Object(m)
        }
        McpMessage::Response { id, result } => json!({
            "jsonrpc": "2.0",
            "id": id,
            "result": result,
        }),
        McpMessage::ErrorResponse { id, error } => json!({
            "jsonrpc": "2.0",
            "id": id,
            "error": error,
        }),
    };
    serde_json::to_vec(&value).expect("mcp messages serialize")
}

fn parse_id(value: &Value) -> Result<McpId, McpDecodeError> {
    match value {
        Value::Number(n) => n
            .as_i64()
            .map(McpId::Int)
            .ok_or_else(|| McpDecodeError::invalid("non-integer numeric id")),
        Value::String(s) => Ok(McpId::Str(s.clone())),
        _ => Err(McpDecodeError::invalid("id must be an integer or string")),
    }
}

/// Decode JSON bytes into a message, enforcing the JSON-RPC 2.0 envelope.
pub fn mcp_decode(bytes: &[u8]) -> Result<McpMessage, McpDecodeError> {
    let text = std::str::from_utf8(bytes).map_err(|e| McpDecodeError::parse(e.to_string()))?;
    let value: Value = serde_json::from_str(text).map_err(|e| McpDecodeError::parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| McpDecodeError::invalid("message must be a JSON object"))?;
    match obj.get("jsonrpc").and_then(Value::as_str) {
        Some("2.0") => {}
        Some(other) => return Err(McpDecodeError::invalid(format!("jsonrpc must be \"2.0\", got \"{other}\""))),
        None => return Err(McpDecodeError::invalid("missing jsonrpc field")),
    }
    let has_result = obj.contains_key("result");
    let has_error = obj.contains_key("error");
    if has_result && has_error {
        return Err(McpDecodeError::invalid("message carries both result and error"));
    }
    if has_result {
        let id = obj
            .get("id")
            .ok_or_else(|| McpDecodeError::invalid("response missing id"))
            .and_then(parse_id)?;
        return Ok(McpMessage::Response { id, result: obj["result"].clone() });
    }
    if has_error {
        let error: McpErrorObject = serde_json::from_value(obj["error"].clone())
            .map_err(|e| McpDecodeError::invalid(format!("malformed error object: {e}")))?;
        let id = match obj.get("id") {
            None | Some(Value::Null) => None,
            Some(v) => Some(parse_id(v)?),
        };
        return Ok(McpMessage::ErrorResponse { id, error });
    }
    let method = obj
        .get("method")
        .and_then(Value::as_str)
        .ok_or_else(|| McpDecodeError::invalid("message has neither method nor result/error"))?
        .to_string();
    let params = obj.get("params").cloned();
    match obj.get("id") {
        None | Some(Value::Null) => Ok(McpMessage::Notification { method, params }),
        Some(v) => Ok(McpMessage::Request { id: parse_id(v)?, method, params }),
    }
}

/// Capability sets declared during initialization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct McpCapabilities {
    pub tools: bool,
    pub resources: bool,
    pub prompts: bool,
    pub sampling: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub experimental: BTreeMap<String, bool>,
}

/// Effective capabilities are the intersection: plain flags AND together and
/// experimental flags AND per key (missing counts as false).
pub fn negotiate(client: &McpCapabilities, server: &McpCapabilities) -> McpCapabilities {
    let mut experimental = BTreeMap::new();
    for (key, &client_flag) in &client.experimental {
        let server_flag = server.experimental.get(key).copied().unwrap_or(false);
        experimental.insert(key.clone(), client_flag && server_flag);
    }
    for key in server.experimental.keys() {
        experimental.entry(key.clone()).or_insert(false);
    }
    McpCapabilities {
        tools: client.tools && server.tools,
        resources: client.resources && server.resources,
        prompts: client.prompts && server.prompts,
        sampling: client.sampling && server.sampling,
        experimental,
    }
}

/// Pending-request table keyed by id. Allows many logical in-flight requests
/// over one channel; a duplicate inbound response id is a protocol error.
#[derive(Debug, Default)]
pub struct RequestCorrelator {
    inner: Mutex<CorrelatorInner>,
}

#[derive(Debug, Default)]
struct CorrelatorInner {
    next_id: i64,
    pending: HashSet<McpId>,
}

impl RequestCorrelator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocate a fresh integer id and mark it pending.
    pub fn issue(&self) -> McpId {
        let mut inner = self.inner.lock().unwrap();
        inner.next_id += 1;
        let id = McpId::Int(inner.next_id);
        inner.pending.insert(id.clone());
        id
    }

    /// Mark an externally chosen id as pending.
    pub fn track(&self, id: McpId) -> Result<(), McpDecodeError> {
        let mut inner = self.inner.lock().unwrap();
        if !inner.pending.insert(id) {
            return Err(McpDecodeError::invalid("request id already in flight"));
        }
        Ok(())
    }

    /// Resolve an inbound response id. Unknown or already-resolved ids are
    /// protocol errors classified `-32600`.
    pub fn resolve(&self, id: &McpId) -> Result<(), McpDecodeError> {
        let mut inner = self.inner.lock().unwrap();
        if inner.pending.remove(id) {
            Ok(())
        } else {
            Err(McpDecodeError::invalid("response id does not match any pending request"))
        }
    }

    pub fn pending_count(&self) -> usize {
        self.inner.lock().unwrap().pending.len()
    }
}
