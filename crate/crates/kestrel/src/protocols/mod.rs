//! Wire-level codecs and state machines for the three agent protocols:
//! MCP (JSON-RPC 2.0 tool and resource sharing), A2A (task lifecycles with
//! artifacts), and ACP (capability manifests and tokens), plus the canonical
//! tool representation that bridges all three and the STDIO/HTTP transports.

pub mod a2a;
pub mod acp;
pub mod bridge;
pub mod httpc;
pub mod mcp;
pub mod transport;

pub use a2a::{A2aError, A2aMessage, A2aPart, A2aTask, Artifact, PartType, TaskState};
pub use acp::{
    acp_token_valid, AcpCapability, AcpError, AcpManifest, AcpRequest, AcpTaskInfo, AcpToken,
    RequestType, Retryability, Severity,
};
pub use bridge::{BridgeError, CanonicalTool, McpToolDescriptor};
pub use mcp::{
    mcp_decode, mcp_encode, negotiate, McpCapabilities, McpDecodeError, McpErrorObject, McpId,
    McpMessage, RequestCorrelator, INTERNAL_ERROR, INVALID_PARAMS, INVALID_REQUEST,
    METHOD_NOT_FOUND, PARSE_ERROR, SERVER_ERROR,
};
pub use transport::{HttpClientTransport, Incoming, LineTransport, Transport, TransportError};
