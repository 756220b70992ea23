//! One tool, three protocols: MCP JSON-RPC framing, the A2A task
//! lifecycle with artifacts, ACP capability tokens, and the canonical
//! bridge between them.
//!
//! ```bash
//! cargo run -p kestrel --example protocol_bridge
//! ```

use kestrel::protocols::{
    a2a::{a2a_add_artifact, a2a_set_progress, a2a_transition, A2aMessage, A2aTask, TaskState},
    acp::{acp_token_valid, AcpToken},
    bridge::{self, CanonicalTool},
    mcp_decode, mcp_encode, negotiate, McpCapabilities, McpMessage,
};
use kestrel::util::parse_rfc3339;
use serde_json::json;
use std::collections::BTreeMap;

fn main() {
    // MCP: encode a tools/call request and read it back.
    let request = McpMessage::request(
        1,
        "tools/call",
        Some(json!({"name": "calculator", "arguments": {"expression": "2+2"}})),
    );
    let bytes = mcp_encode(&request);
    println!("MCP wire: {}", String::from_utf8_lossy(&bytes));
    assert_eq!(mcp_decode(&bytes).unwrap(), request);

    let mut client = McpCapabilities { tools: true, resources: true, ..Default::default() };
    client.experimental.insert("streaming".into(), true);
    let server = McpCapabilities { tools: true, ..Default::default() };
    println!("negotiated: {:?}\n", negotiate(&client, &server));

    // A2A: full lifecycle with an artifact and monotone progress.
    let task = A2aTask::new("task_1", A2aMessage::text("msg_1", "Analyze this dataset", 0.0), 0.0);
    let task = a2a_transition(task, TaskState::Pending, 1.0).unwrap();
    let task = a2a_transition(task, TaskState::Running, 2.0).unwrap();
    let task = a2a_set_progress(task, 0.73, 3.0).unwrap();
    let task = a2a_add_artifact(task, "report", "result", json!({"rows": 1200}), None, 4.0).unwrap();
    let task = a2a_transition(task, TaskState::Completed, 5.0).unwrap();
    println!("A2A task ended {:?} with {} artifact(s)", task.state, task.artifacts.len());
    println!("  cancel after completion allowed? {}\n", task.state.can_transition_to(TaskState::Cancelled));

    // ACP: capability token validity is granted AND unexpired.
    let token = AcpToken {
        token_id: "tok_1".into(),
        agent_id: "agent_research".into(),
        capabilities: vec!["literature_search".into()],
        permissions: BTreeMap::new(),
        expires: "2025-02-25T00:00:00Z".into(),
        metadata: BTreeMap::new(),
    };
    let before = parse_rfc3339("2025-01-26T00:00:00Z").unwrap();
    let after = parse_rfc3339("2025-03-01T00:00:00Z").unwrap();
    println!("ACP token valid before expiry: {}", acp_token_valid(&token, "literature_search", before));
    println!("ACP token valid after expiry:  {}\n", acp_token_valid(&token, "literature_search", after));

    // Canonical bridge: register once, speak all three protocols.
    let tool = CanonicalTool::new(
        "calculator",
        "Evaluate mathematical expressions",
        json!({"type": "object", "properties": {"expression": {"type": "string"}}, "required": ["expression"]}),
    )
    .unwrap();
    let mcp_form = bridge::to_mcp(&tool);
    let a2a_form = bridge::to_a2a(&tool);
    let acp_form = bridge::to_acp(&tool);
    assert_eq!(bridge::from_mcp(&mcp_form).unwrap(), tool);
    assert_eq!(bridge::from_a2a(&a2a_form).unwrap(), tool);
    assert_eq!(bridge::from_acp(&acp_form).unwrap(), tool);
    println!("canonical tool round-trips through MCP, A2A, and ACP");
}
