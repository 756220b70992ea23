//! A2A task lifecycle: multimodal message parts, the six-state task FSM,
//! accumulate-only artifacts, and monotone progress.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::util::format_rfc3339;

#[derive(Debug, Error)]
pub enum A2aError {
    #[error("invalid task transition {from:?} -> {to:?}")]
    InvalidTransition { from: TaskState, to: TaskState },
    #[error("task `{0}` is terminal; artifacts can no longer be added")]
    TerminalTask(String),
    #[error("progress must lie in [0,1], got {0}")]
    ProgressRange(f64),
    #[error("progress regression: {current} -> {proposed}")]
    ProgressRegression { current: f64, proposed: f64 },
}

/// Task lifecycle states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskState {
    Created,
    Pending,
    Running,
    Completed,
    Failed,
    Cancelled,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Completed | TaskState::Failed | TaskState::Cancelled)
    }

    /// The legal transition relation: CREATED -> PENDING -> RUNNING ->
    /// {COMPLETED | FAILED}, plus cancellation from any of the first three
    /// states. Seven edges in total.
    pub fn can_transition_to(self, target: TaskState) -> bool {
        use TaskState::*;
        matches!(
            (self, target),
            (Created, Pending)
                | (Pending, Running)
                | (Running, Completed)
                | (Running, Failed)
                | (Created, Cancelled)
                | (Pending, Cancelled)
                | (Running, Cancelled)
        )
    }
}

/// Message part modalities. Binary payloads ride through as opaque base64
/// strings and are never interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartType {
    Text,
    Image,
    Audio,
    Video,
    File,
    Form,
    Structured,
}

/// One typed message part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2aPart {
    #[serde(rename = "type")]
    pub part_type: PartType,
    pub content: String,
    #[serde(rename = "mimeType", default, skip_serializing_if = "Option::is_none")]
    pub mime_type: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
}

impl A2aPart {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            part_type: PartType::Text,
            content: content.into(),
            mime_type: None,
            metadata: BTreeMap::new(),
        }
    }
}

/// A multimodal A2A message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2aMessage {
    pub id: String,
    pub parts: Vec<A2aPart>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub context: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
    pub timestamp: String,
}

impl A2aMessage {
    pub fn text(id: impl Into<String>, content: impl Into<String>, now: f64) -> Self {
        Self {
            id: id.into(),
            parts: vec![A2aPart::text(content)],
            context: BTreeMap::new(),
            metadata: BTreeMap::new(),
            timestamp: format_rfc3339(now),
        }
    }
}

/// A task output. Artifacts only accumulate; none are ever removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: String,
    pub name: String,
    #[serde(rename = "type")]
    pub artifact_type: String,
    pub content: Value,
    #[serde(rename = "mimeType", default, skip_serializing_if = "Option::is_none")]
    pub mime_type: Option<String>,
    pub created: String,
}

/// An A2A task. Constructors start at CREATED.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2aTask {
    pub id: String,
    pub state: TaskState,
    pub instruction: A2aMessage,
    pub artifacts: Vec<Artifact>,
    pub progress: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
    pub created: String,
    pub updated: String,
}

impl A2aTask {
    pub fn new(id: impl Into<String>, instruction: A2aMessage, now: f64) -> Self {
        let stamp = format_rfc3339(now);
        Self {
            id: id.into(),
            state: TaskState::Created,
            instruction,
            artifacts: Vec::new(),
            progress: 0.0,
            metadata: BTreeMap::new(),
            created: stamp.clone(),
            updated: stamp,
        }
    }
}

/// Apply a state transition, bumping `updated`. Forbidden transitions are
/// rejected with the attempted pair.
pub fn a2a_transition(mut task: A2aTask, target: TaskState, now: f64) -> Result<A2aTask, A2aError> {
    if !task.state.can_transition_to(target) {
        return Err(A2aError::InvalidTransition { from: task.state, to: target });
    }
    task.state = target;
    task.updated = format_rfc3339(now);
    Ok(task)
}

/// Append an artifact with a generated id and creation timestamp. Terminal
/// tasks refuse new artifacts.
pub fn a2a_add_artifact(
    mut task: A2aTask,
    name: impl Into<String>,
    artifact_type: impl Into<String>,
    content: Value,
    mime_type: Option<String>,
    now: f64,
) -> Result<A2aTask, A2aError> {
    if task.state.is_terminal() {
        return Err(A2aError::TerminalTask(task.id));
    }
    let artifact = Artifact {
        id: format!("art_{}", task.artifacts.len() + 1),
        name: name.into(),
        artifact_type: artifact_type.into(),
        content,
        mime_type,
        created: format_rfc3339(now),
    };
    task.artifacts.push(artifact);
    task.updated = format_rfc3339(now);
    Ok(task)
}

/// Progress updates must be within `[0,1]` and non-decreasing.
pub fn a2a_set_progress(mut task: A2aTask, progress: f64, now: f64) -> Result<A2aTask, A2aError> {
    if !(0.0..=1.0).contains(&progress) {
        return Err(A2aError::ProgressRange(progress));
    }
    if progress < task.progress {
        return Err(A2aError::ProgressRegression { current: task.progress, proposed: progress });
    }
    task.progress = progress;
    task.updated = format_rfc3339(now);
    Ok(task)
}
