//! The ReAct loop: alternating Thought / Action / Observation turns against
//! a completion backend, with tool calls validated, retried, and recorded
//! into the execution tree.

use serde_json::{json, Map, Value};

use super::backend::{BackendError, CompletionBackend, GenerationParams};
use crate::resilience::{with_retry, ErrorKind, ErrorRecord, RetryError, RetryPolicy};
use crate::tools::ToolRegistry;
use crate::tracking::{EventType, NodeStatus, SharedTree};
use crate::util::{Clock, Sleeper};

#[derive(Debug, thiserror::Error)]
pub enum ReactError {
    #[error("no final answer after {iterations} iterations")]
    OutOfIterations { iterations: u32, trace: String },
    #[error("deadline exceeded during the reasoning loop")]
    Timeout { trace: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// One tool invocation made during the loop.
#[derive(Debug, Clone)]
pub struct ToolCallRecord {
    pub tool: String,
    pub args: Value,
    pub success: bool,
    pub observation: String,
}

#[derive(Debug)]
enum Parsed {
    Answer(String),
    Call { tool: String, args: Map<String, Value> },
    Unparseable,
}

/// First balanced `{...}` region in a string.
fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parse a model turn. `Final Answer:`/`Answer:` markers win; otherwise an
/// `Action:` line with an `Action Input:` JSON object, or the inline
/// `tool_name({...})` form.
fn parse_turn(text: &str) -> Parsed {
    for line in text.lines() {
        let lower = line.trim_start().to_lowercase();
        for marker in ["final answer:", "answer:"] {
            if lower.starts_with(marker) {
                let offset = line.to_lowercase().find(marker).unwrap() + marker.len();
                let mut answer = line[offset..].trim().to_string();
                // The answer may continue on following lines.
                let after: Vec<&str> = text
                    .lines()
                    .skip_while(|l| *l != line)
                    .skip(1)
                    .collect();
                if !after.is_empty() {
                    let tail = after.join("\n");
                    let tail = tail.trim();
                    if !tail.is_empty() {
                        answer = format!("{answer}\n{tail}").trim().to_string();
                    }
                }
                return Parsed::Answer(answer);
            }
        }
    }
    // "Action: <tool>" then "Action Input: <json>".
    let mut tool: Option<String> = None;
    let mut rest_after_action = String::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_start();
        if let Some(name) = trimmed.strip_prefix("Action:") {
            tool = Some(name.trim().to_string());
            rest_after_action = text.lines().skip(i + 1).collect::<Vec<_>>().join("\n");
            // Tolerate "Action: calculator({...})" on one line.
            if let Some(open) = name.find('(') {
                let inline = &name[open..];
                if let Some(json_text) = extract_json_object(inline) {
                    if let Ok(Value::Object(args)) = serde_json::from_str(json_text) {
                        return Parsed::Call { tool: name[..open].trim().to_string(), args };
                    }
                }
            }
            break;
        }
    }
    if let Some(tool) = tool {
        let input_section = rest_after_action
            .lines()
            .skip_while(|l| !l.trim_start().starts_with("Action Input:"))
            .collect::<Vec<_>>()
            .join("\n");
        let source = if input_section.is_empty() { &rest_after_action } else { &input_section };
        if let Some(json_text) = extract_json_object(source) {
            if let Ok(Value::Object(args)) = serde_json::from_str(json_text) {
                return Parsed::Call { tool, args };
            }
        }
        return Parsed::Unparseable;
    }
    // Inline form: tool_name({...}) anywhere in the turn.
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(open) = trimmed.find('(') {
            let name = trimmed[..open].trim();
            if !name.is_empty()
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && trimmed.ends_with(')')
            {
                if let Some(json_text) = extract_json_object(&trimmed[open..]) {
                    if let Ok(Value::Object(args)) = serde_json::from_str(json_text) {
                        return Parsed::Call { tool: name.to_string(), args };
                    }
                }
            }
        }
    }
    Parsed::Unparseable
}

/// Build the loop prompt: persona, tool list, format contract, task, and
/// the transcript so far.
pub fn build_react_prompt(agent_name: &str, tools: &ToolRegistry, task: &str, trace: &str) -> String {
    let mut tool_lines = String::new();
    for meta in tools.descriptors() {
        tool_lines.push_str(&format!("- {}: {}\n", meta.name, meta.description));
    }
    let mut prompt = format!(
        "You are {agent_name}, a capable assistant. Solve the task step by step.\n\n\
         Available tools:\n{tool_lines}\n\
         Use this format:\n\
         Thought: your reasoning\n\
         Action: <tool name>\n\
         Action Input: <JSON arguments>\n\
         Observation: <tool result>\n\
         ... (repeat as needed)\n\
         Final Answer: <the answer>\n\n\
         Task: {task}\n"
    );
    if !trace.is_empty() {
        prompt.push('\n');
        prompt.push_str(trace);
    }
    prompt
}

#[derive(Debug)]
pub struct ReactOutcome {
    pub answer: String,
    pub trace: String,
    pub tool_calls: Vec<ToolCallRecord>,
    /// How many model turns the loop used, counting the answering turn.
    pub iterations: u32,
}

/// Everything the loop needs from its agent.
pub struct ReactContext<'a> {
    pub agent_name: &'a str,
    pub backend: &'a dyn CompletionBackend,
    pub tools: &'a ToolRegistry,
    pub params: &'a GenerationParams,
    pub clock: &'a dyn Clock,
    pub sleeper: &'a dyn Sleeper,
    pub tree: &'a SharedTree,
    pub parent_node: &'a str,
    pub deadline: f64,
    pub max_iterations: u32,
}

/// Run the loop until an answer marker, the iteration cap, or the deadline.
/// Tool failures flagged retryable are retried under the tool retry policy;
/// the final outcome of every call lands in the transcript as an
/// Observation either way.
pub fn react_loop(ctx: &ReactContext<'_>, task: &str) -> Result<ReactOutcome, ReactError> {
    let mut trace = String::new();
    let mut tool_calls = Vec::new();
    let policy = RetryPolicy::for_kind(ErrorKind::ToolError);

    for iteration in 0..ctx.max_iterations.max(1) {
        if ctx.clock.now() > ctx.deadline {
            return Err(ReactError::Timeout { trace });
        }
        let prompt = build_react_prompt(ctx.agent_name, ctx.tools, task, &trace);
        let step_node = ctx
            .tree
            .record(
                ctx.parent_node,
                EventType::ReasoningStep,
                meta(&[("iteration_count", json!(iteration))]),
                ctx.clock.now(),
            )
            .ok();
        let turn = match ctx.backend.generate(&prompt, ctx.params) {
            Ok(t) => t,
            Err(e) => {
                if let Some(node) = &step_node {
                    let _ = ctx.tree.close(node, NodeStatus::Failed, ctx.clock.now());
                }
                return Err(ReactError::Backend(e));
            }
        };
        if let Some(node) = &step_node {
            let _ = ctx.tree.close(node, NodeStatus::Completed, ctx.clock.now());
        }

        match parse_turn(&turn) {
            Parsed::Answer(answer) => {
                trace.push_str(turn.trim_end());
                trace.push('\n');
                return Ok(ReactOutcome { answer, trace, tool_calls, iterations: iteration + 1 });
            }
            Parsed::Call { tool, args } => {
                trace.push_str(turn.trim_end());
                trace.push('\n');
                let observation = run_tool(ctx, &policy, &tool, &args, &mut tool_calls);
                trace.push_str(&format!("Observation: {observation}\n"));
            }
            Parsed::Unparseable => {
                trace.push_str(turn.trim_end());
                trace.push('\n');
                trace.push_str(
                    "Observation: could not parse an action; reply with `Action: <tool>` and \
                     `Action Input: <JSON>`, or `Final Answer: <answer>`.\n",
                );
            }
        }
    }
    Err(ReactError::OutOfIterations { iterations: ctx.max_iterations, trace })
}

fn run_tool(
    ctx: &ReactContext<'_>,
    policy: &RetryPolicy,
    tool: &str,
    args: &Map<String, Value>,
    tool_calls: &mut Vec<ToolCallRecord>,
) -> String {
    let call_node = ctx
        .tree
        .record(
            ctx.parent_node,
            EventType::ToolCallStart,
            meta(&[("tool_name", json!(tool)), ("parameters", Value::Object(args.clone()))]),
            ctx.clock.now(),
        )
        .ok();

    let attempt = || -> Result<crate::tools::ToolResult, ErrorRecord> {
        match ctx.tools.execute(tool, args) {
            Ok(result) => {
                if result.success {
                    Ok(result)
                } else {
                    let info = result.error.clone().unwrap_or(crate::tools::ToolErrorInfo {
                        code: "UNKNOWN".to_string(),
                        message: "tool failed".to_string(),
                        retryable: false,
                    });
                    let mut record = ErrorRecord::new(ErrorKind::ToolError, info.message, tool);
                    record.recoverable = info.retryable;
                    Err(record)
                }
            }
            Err(e) => Err(ErrorRecord::new(ErrorKind::ToolError, e.to_string(), tool).unrecoverable()),
        }
    };
    let outcome = with_retry(policy, ctx.sleeper, || 0.0, |_| attempt());

    match outcome {
        Ok(result) => {
            let observation = result.value.to_string();
            if let Some(node) = &call_node {
                let now = ctx.clock.now();
                let _ = ctx.tree.record_instant(node, EventType::ToolCallComplete, Map::new(), now);
                let _ = ctx.tree.close(node, NodeStatus::Completed, now);
            }
            tool_calls.push(ToolCallRecord {
                tool: tool.to_string(),
                args: Value::Object(args.clone()),
                success: true,
                observation: observation.clone(),
            });
            observation
        }
        Err(error) => {
            let message = match &error {
                RetryError::Exhausted { last_message, .. } => last_message.clone(),
                RetryError::Unrecoverable(record) => record.message.clone(),
            };
            if let Some(node) = &call_node {
                let now = ctx.clock.now();
                let _ = ctx.tree.record_instant(
                    node,
                    EventType::ToolCallFailed,
                    meta(&[("error", json!(message))]),
                    now,
                );
                let _ = ctx.tree.close(node, NodeStatus::Completed, now);
            }
            tool_calls.push(ToolCallRecord {
                tool: tool.to_string(),
                args: Value::Object(args.clone()),
                success: false,
                observation: message.clone(),
            });
            format!("error: {message}")
        }
    }
}

pub(crate) fn meta(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}
