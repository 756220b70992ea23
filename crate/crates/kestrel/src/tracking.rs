//! Hierarchical execution-event tree with enforced invariants, derived
//! performance metrics, bottleneck detection, critical-path analysis,
//! progress and ETA estimation, and JSON/CSV/Markdown export.
//!
//! Three invariants hold after every accepted `record`/`close`:
//! temporal consistency (children run inside their parent's span), status
//! propagation (a FAILED child forbids a COMPLETED parent), and id
//! uniqueness. Domain-level failures that an agent recovers from are
//! recorded through the `*_FAILED` event *types* with COMPLETED status;
//! the FAILED *status* is reserved for work that actually sank its subtree.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

/// The event taxonomy from the tracking table, spanning task lifecycle,
/// routing/decomposition, sub-agent execution, tool execution, and
/// memory/special events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventType {
    TaskStart,
    TaskComplete,
    TaskFailed,
    RoutingDecision,
    TaskDecomposition,
    SubAgentSpawn,
    ResultSynthesis,
    SubAgentStart,
    SubAgentComplete,
    SubAgentFailed,
    ReasoningStep,
    ToolCallStart,
    ToolCallComplete,
    ToolCallFailed,
    MemoryOperation,
    ValidationFailed,
    SummarizationTrigger,
    ContextOverflow,
}

impl EventType {
    fn as_str(self) -> &'static str {
        match self {
            EventType::TaskStart => "TASK_START",
            EventType::TaskComplete => "TASK_COMPLETE",
            EventType::TaskFailed => "TASK_FAILED",
            EventType::RoutingDecision => "ROUTING_DECISION",
            EventType::TaskDecomposition => "TASK_DECOMPOSITION",
            EventType::SubAgentSpawn => "SUB_AGENT_SPAWN",
            EventType::ResultSynthesis => "RESULT_SYNTHESIS",
            EventType::SubAgentStart => "SUB_AGENT_START",
            EventType::SubAgentComplete => "SUB_AGENT_COMPLETE",
            EventType::SubAgentFailed => "SUB_AGENT_FAILED",
            EventType::ReasoningStep => "REASONING_STEP",
            EventType::ToolCallStart => "TOOL_CALL_START",
            EventType::ToolCallComplete => "TOOL_CALL_COMPLETE",
            EventType::ToolCallFailed => "TOOL_CALL_FAILED",
            EventType::MemoryOperation => "MEMORY_OPERATION",
            EventType::ValidationFailed => "VALIDATION_FAILED",
            EventType::SummarizationTrigger => "SUMMARIZATION_TRIGGER",
            EventType::ContextOverflow => "CONTEXT_OVERFLOW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeStatus {
    Pending,
    Running,
    Completed,
    Failed,
}

/// One node in the execution tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionNode {
    pub id: String,
    pub event_type: EventType,
    pub start: f64,
    pub end: Option<f64>,
    pub status: NodeStatus,
    pub metadata: Map<String, Value>,
    pub children: Vec<String>,
    pub parent: Option<String>,
}

impl ExecutionNode {
    pub fn duration(&self) -> f64 {
        self.end.map(|e| e - self.start).unwrap_or(0.0)
    }
}

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("parent `{0}` is not running; cannot record children")]
    ParentNotRunning(String),
    #[error("node `{0}` is not open")]
    NotOpen(String),
    #[error("invariant violated: {0}")]
    Invariant(InvariantViolation),
    #[error("root is still open")]
    RootOpen,
    #[error("corrupt export: {0}")]
    Corrupt(String),
}

/// Which tree invariant a construction or verification step violated.
#[derive(Debug, Clone, PartialEq)]
pub enum InvariantViolation {
    /// Child span escapes the parent span.
    TemporalInconsistency { parent: String, child: String },
    /// COMPLETED parent with a FAILED child.
    StatusPropagation { parent: String, child: String },
    /// Duplicate node id.
    DuplicateId(String),
    /// Parent reference to a missing node.
    DanglingParent { child: String, parent: String },
    /// Node closed before it started.
    NegativeSpan(String),
}

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::TemporalInconsistency { parent, child } => {
                write!(f, "child `{child}` runs outside parent `{parent}` span")
            }
            Self::StatusPropagation { parent, child } => {
                write!(f, "completed parent `{parent}` has failed child `{child}`")
            }
            Self::DuplicateId(id) => write!(f, "duplicate id `{id}`"),
            Self::DanglingParent { child, parent } => {
                write!(f, "child `{child}` references missing parent `{parent}`")
            }
            Self::NegativeSpan(id) => write!(f, "node `{id}` ends before it starts"),
        }
    }
}

/// Flat node form used for unchecked construction and the verifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawNode {
    pub id: String,
    pub event_type: EventType,
    pub start: f64,
    pub end: Option<f64>,
    pub status: NodeStatus,
    #[serde(default)]
    pub metadata: Map<String, Value>,
    #[serde(default)]
    pub parent: Option<String>,
}

/// Check all three invariants over a flat node list.
pub fn verify_raw(nodes: &[RawNode]) -> Vec<InvariantViolation> {
    let mut violations = Vec::new();
    let mut by_id: BTreeMap<&str, &RawNode> = BTreeMap::new();
    for node in nodes {
        if by_id.insert(node.id.as_str(), node).is_some() {
            violations.push(InvariantViolation::DuplicateId(node.id.clone()));
        }
        if let Some(end) = node.end {
            if end < node.start {
                violations.push(InvariantViolation::NegativeSpan(node.id.clone()));
            }
        }
    }
    for node in nodes {
        let Some(parent_id) = &node.parent else { continue };
        let Some(parent) = by_id.get(parent_id.as_str()) else {
            violations.push(InvariantViolation::DanglingParent {
                child: node.id.clone(),
                parent: parent_id.clone(),
            });
            continue;
        };
        let child_end_ok = match (node.end, parent.end) {
            (Some(ce), Some(pe)) => ce <= pe,
            (None, Some(_)) => false, // open child under closed parent
            _ => true,
        };
        if node.start < parent.start || !child_end_ok {
            violations.push(InvariantViolation::TemporalInconsistency {
                parent: parent_id.clone(),
                child: node.id.clone(),
            });
        }
        if node.status == NodeStatus::Failed && parent.status == NodeStatus::Completed {
            violations.push(InvariantViolation::StatusPropagation {
                parent: parent_id.clone(),
                child: node.id.clone(),
            });
        }
    }
    violations
}

/// The execution tree. `record` and `close` validate invariants up front,
/// so a tree built through them always verifies clean.
#[derive(Debug, Clone)]
pub struct ExecutionTree {
    nodes: BTreeMap<String, ExecutionNode>,
    root: String,
    order: Vec<String>,
    next_id: u64,
}

impl ExecutionTree {
    /// Open the root node.
    pub fn start(event_type: EventType, metadata: Map<String, Value>, now: f64) -> Self {
        let root_id = "evt-001".to_string();
        let root = ExecutionNode {
            id: root_id.clone(),
            event_type,
            start: now,
            end: None,
            status: NodeStatus::Running,
            metadata,
            children: Vec::new(),
            parent: None,
        };
        Self {
            nodes: BTreeMap::from([(root_id.clone(), root)]),
            root: root_id.clone(),
            order: vec![root_id],
            next_id: 1,
        }
    }

    pub fn root_id(&self) -> &str {
        &self.root
    }

    pub fn get(&self, id: &str) -> Option<&ExecutionNode> {
        self.nodes.get(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in recording order.
    pub fn nodes_in_order(&self) -> impl Iterator<Item = &ExecutionNode> {
        self.order.iter().filter_map(|id| self.nodes.get(id))
    }

    /// Open a child event under a RUNNING parent. Rejects events that start
    /// before their parent.
    pub fn record(
        &mut self,
        parent_id: &str,
        event_type: EventType,
        metadata: Map<String, Value>,
        now: f64,
    ) -> Result<String, TrackingError> {
        let parent = self
            .nodes
            .get(parent_id)
            .ok_or_else(|| TrackingError::UnknownNode(parent_id.to_string()))?;
        if parent.status != NodeStatus::Running {
            return Err(TrackingError::ParentNotRunning(parent_id.to_string()));
        }
        if now < parent.start {
            return Err(TrackingError::Invariant(InvariantViolation::TemporalInconsistency {
                parent: parent_id.to_string(),
                child: "<new>".to_string(),
            }));
        }
        self.next_id += 1;
        let id = format!("evt-{:03}", self.next_id);
        let node = ExecutionNode {
            id: id.clone(),
            event_type,
            start: now,
            end: None,
            status: NodeStatus::Running,
            metadata,
            children: Vec::new(),
            parent: Some(parent_id.to_string()),
        };
        self.nodes.get_mut(parent_id).unwrap().children.push(id.clone());
        self.nodes.insert(id.clone(), node);
        self.order.push(id.clone());
        Ok(id)
    }

    /// Record a zero-duration, immediately closed marker event.
    pub fn record_instant(
        &mut self,
        parent_id: &str,
        event_type: EventType,
        metadata: Map<String, Value>,
        now: f64,
    ) -> Result<String, TrackingError> {
        let id = self.record(parent_id, event_type, metadata, now)?;
        self.close(&id, NodeStatus::Completed, now)?;
        Ok(id)
    }

    /// Close an open node. Rejected while any child is still open, when the
    /// close time precedes the start, or when closing COMPLETED over a
    /// FAILED child.
    pub fn close(&mut self, node_id: &str, status: NodeStatus, now: f64) -> Result<(), TrackingError> {
        let node = self
            .nodes
            .get(node_id)
            .ok_or_else(|| TrackingError::UnknownNode(node_id.to_string()))?;
        if node.status != NodeStatus::Running {
            return Err(TrackingError::NotOpen(node_id.to_string()));
        }
        if now < node.start {
            return Err(TrackingError::Invariant(InvariantViolation::NegativeSpan(
                node_id.to_string(),
            )));
        }
        for child_id in &node.children {
            let child = &self.nodes[child_id];
            if child.end.is_none() {
                return Err(TrackingError::Invariant(InvariantViolation::TemporalInconsistency {
                    parent: node_id.to_string(),
                    child: child_id.clone(),
                }));
            }
            if child.status == NodeStatus::Failed && status == NodeStatus::Completed {
                return Err(TrackingError::Invariant(InvariantViolation::StatusPropagation {
                    parent: node_id.to_string(),
                    child: child_id.clone(),
                }));
            }
        }
        let node = self.nodes.get_mut(node_id).unwrap();
        node.end = Some(now);
        node.status = status;
        Ok(())
    }

    pub fn root_closed(&self) -> bool {
        self.nodes[&self.root].end.is_some()
    }

    /// Re-run the invariant verifier over the whole tree.
    pub fn verify(&self) -> Vec<InvariantViolation> {
        let raw: Vec<RawNode> = self
            .nodes_in_order()
            .map(|n| RawNode {
                id: n.id.clone(),
                event_type: n.event_type,
                start: n.start,
                end: n.end,
                status: n.status,
                metadata: n.metadata.clone(),
                parent: n.parent.clone(),
            })
            .collect();
        verify_raw(&raw)
    }

    /// Build a tree from flat nodes without invariant checks (for import
    /// and verifier tests). The first node is the root.
    pub fn from_raw_unchecked(raw: Vec<RawNode>) -> Result<Self, TrackingError> {
        let root = raw
            .first()
            .map(|n| n.id.clone())
            .ok_or_else(|| TrackingError::Corrupt("no nodes".to_string()))?;
        let order: Vec<String> = raw.iter().map(|n| n.id.clone()).collect();
        let mut nodes: BTreeMap<String, ExecutionNode> = raw
            .into_iter()
            .map(|n| {
                (
                    n.id.clone(),
                    ExecutionNode {
                        id: n.id,
                        event_type: n.event_type,
                        start: n.start,
                        end: n.end,
                        status: n.status,
                        metadata: n.metadata,
                        children: Vec::new(),
                        parent: n.parent,
                    },
                )
            })
            .collect();
        let links: Vec<(String, String)> = nodes
            .values()
            .filter_map(|n| n.parent.clone().map(|p| (p, n.id.clone())))
            .collect();
        for (parent, child) in links {
            if let Some(p) = nodes.get_mut(&parent) {
                p.children.push(child);
            }
        }
        // Preserve recording order for children.
        let position: BTreeMap<String, usize> =
            order.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        for node in nodes.values_mut() {
            node.children.sort_by_key(|c| position.get(c).copied().unwrap_or(usize::MAX));
        }
        let next_id = nodes.len() as u64;
        Ok(Self { nodes, root, order, next_id })
    }
}

/// Concurrent facade over an [`ExecutionTree`]: multiple producers may
/// record and close events; each call is atomic with respect to the others,
/// and reads see a consistent snapshot.
#[derive(Clone)]
pub struct SharedTree(std::sync::Arc<std::sync::Mutex<ExecutionTree>>);

impl SharedTree {
    pub fn start(event_type: EventType, metadata: Map<String, Value>, now: f64) -> Self {
        Self(std::sync::Arc::new(std::sync::Mutex::new(ExecutionTree::start(
            event_type, metadata, now,
        ))))
    }

    pub fn root_id(&self) -> String {
        self.0.lock().unwrap().root_id().to_string()
    }

    pub fn record(
        &self,
        parent_id: &str,
        event_type: EventType,
        metadata: Map<String, Value>,
        now: f64,
    ) -> Result<String, TrackingError> {
        self.0.lock().unwrap().record(parent_id, event_type, metadata, now)
    }

    pub fn record_instant(
        &self,
        parent_id: &str,
        event_type: EventType,
        metadata: Map<String, Value>,
        now: f64,
    ) -> Result<String, TrackingError> {
        self.0.lock().unwrap().record_instant(parent_id, event_type, metadata, now)
    }

    pub fn close(&self, node_id: &str, status: NodeStatus, now: f64) -> Result<(), TrackingError> {
        self.0.lock().unwrap().close(node_id, status, now)
    }

    /// Close every still-open node (deepest first) with the given status.
    /// Used to salvage a consistent partial trace on abort.
    pub fn close_all_open(&self, status: NodeStatus, now: f64) {
        let mut tree = self.0.lock().unwrap();
        let mut open: Vec<String> = tree
            .nodes_in_order()
            .filter(|n| n.end.is_none())
            .map(|n| n.id.clone())
            .collect();
        // Children were recorded after parents, so reverse order closes
        // leaves first.
        open.reverse();
        for id in open {
            let _ = tree.close(&id, status, now);
        }
    }

    pub fn snapshot(&self) -> ExecutionTree {
        self.0.lock().unwrap().clone()
    }
}

/// Derived performance metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionMetrics {
    pub t_total: f64,
    pub t_compute: f64,
    pub t_tools: f64,
    pub t_overhead: f64,
    pub throughput_tasks: f64,
    pub throughput_events: f64,
    pub throughput_tools: f64,
    pub peak_concurrent_agents: usize,
    pub total_tool_calls: usize,
    pub total_tokens: u64,
    pub parallel_efficiency: f64,
    pub success_rate: f64,
    pub failure_rate: f64,
    pub retry_rate: f64,
}

/// Compute the metric block. The root must be closed.
pub fn metrics(tree: &ExecutionTree) -> Result<ExecutionMetrics, TrackingError> {
    let root = tree.get(tree.root_id()).unwrap();
    let root_end = root.end.ok_or(TrackingError::RootOpen)?;
    let t_total = root_end - root.start;

    let mut t_compute = 0.0;
    let mut t_tools = 0.0;
    let mut total_tool_calls = 0usize;
    let mut total_tokens = 0u64;
    let mut completed = 0usize;
    let mut failed = 0usize;
    let mut retried = 0usize;
    let mut agent_spans: Vec<(f64, f64)> = Vec::new();
    let mut completed_subtasks = 0usize;

    for node in tree.nodes_in_order() {
        match node.event_type {
            EventType::ReasoningStep => t_compute += node.duration(),
            EventType::ToolCallStart => {
                t_tools += node.duration();
                total_tool_calls += 1;
            }
            EventType::SubAgentStart => {
                agent_spans.push((node.start, node.end.unwrap_or(root_end)));
                if node.status == NodeStatus::Completed {
                    completed_subtasks += 1;
                }
            }
            _ => {}
        }
        if let Some(tokens) = node.metadata.get("tokens").and_then(Value::as_u64) {
            total_tokens += tokens;
        }
        match node.status {
            NodeStatus::Completed => completed += 1,
            NodeStatus::Failed => failed += 1,
            _ => {}
        }
        if node.metadata.get("retry_count").and_then(Value::as_u64).unwrap_or(0) > 0 {
            retried += 1;
        }
    }

    let node_count = tree.len();
    let peak_concurrent_agents = peak_overlap(&agent_spans);
    let parallel_efficiency = if agent_spans.is_empty() || t_total <= 0.0 {
        1.0
    } else {
        let busy: f64 = agent_spans.iter().map(|(s, e)| e - s).sum();
        busy / (agent_spans.len() as f64 * t_total)
    };
    let safe_total = if t_total > 0.0 { t_total } else { f64::INFINITY };
    Ok(ExecutionMetrics {
        t_total,
        t_compute,
        t_tools,
        t_overhead: t_total - t_compute - t_tools,
        throughput_tasks: completed_subtasks as f64 / safe_total,
        throughput_events: node_count as f64 / safe_total,
        throughput_tools: total_tool_calls as f64 / safe_total,
        peak_concurrent_agents,
        total_tool_calls,
        total_tokens,
        parallel_efficiency,
        success_rate: completed as f64 / node_count as f64,
        failure_rate: failed as f64 / node_count as f64,
        retry_rate: retried as f64 / node_count as f64,
    })
}

fn peak_overlap(spans: &[(f64, f64)]) -> usize {
    let mut events: Vec<(f64, i32)> = Vec::new();
    for (s, e) in spans {
        events.push((*s, 1));
        events.push((*e, -1));
    }
    // Ends sort before starts at the same instant.
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut current = 0i32;
    let mut peak = 0i32;
    for (_, delta) in events {
        current += delta;
        peak = peak.max(current);
    }
    peak.max(0) as usize
}

/// Bottleneck families reported by the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BottleneckKind {
    High,
    HighFailures,
    SlowTool,
    Medium,
}

impl BottleneckKind {
    fn severity_rank(self) -> u8 {
        match self {
            BottleneckKind::High => 4,
            BottleneckKind::HighFailures => 3,
            BottleneckKind::SlowTool => 2,
            BottleneckKind::Medium => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bottleneck {
    pub node_id: String,
    pub kind: BottleneckKind,
    pub value: f64,
}

/// Three detector families: nodes over 30% (HIGH) or 15% (MEDIUM) of total
/// time (the root itself is exempt, being the total), tool calls more than
/// twice their baseline, and parents with over 20% failed children. Sorted
/// by severity, then contribution.
pub fn bottlenecks(tree: &ExecutionTree, tool_baselines: &BTreeMap<String, f64>) -> Vec<Bottleneck> {
    let root = tree.get(tree.root_id()).unwrap();
    let t_total = root.duration();
    let mut found = Vec::new();
    if t_total <= 0.0 {
        return found;
    }
    for node in tree.nodes_in_order() {
        if node.id != *tree.root_id() {
            let contribution = node.duration() / t_total;
            if contribution > 0.3 {
                found.push(Bottleneck { node_id: node.id.clone(), kind: BottleneckKind::High, value: contribution });
            } else if contribution > 0.15 {
                found.push(Bottleneck { node_id: node.id.clone(), kind: BottleneckKind::Medium, value: contribution });
            }
        }
        if node.event_type == EventType::ToolCallStart {
            if let Some(name) = node.metadata.get("tool_name").and_then(Value::as_str) {
                if let Some(baseline) = tool_baselines.get(name) {
                    if *baseline > 0.0 && node.duration() > 2.0 * baseline {
                        found.push(Bottleneck {
                            node_id: node.id.clone(),
                            kind: BottleneckKind::SlowTool,
                            value: node.duration() / baseline,
                        });
                    }
                }
            }
        }
        if node.event_type == EventType::SubAgentStart && !node.children.is_empty() {
            let failed = node
                .children
                .iter()
                .filter(|c| tree.get(c).map(|n| n.status == NodeStatus::Failed).unwrap_or(false))
                .count();
            let rate = failed as f64 / node.children.len() as f64;
            if rate > 0.2 {
                found.push(Bottleneck {
                    node_id: node.id.clone(),
                    kind: BottleneckKind::HighFailures,
                    value: rate,
                });
            }
        }
    }
    found.sort_by(|a, b| {
        b.kind
            .severity_rank()
            .cmp(&a.kind.severity_rank())
            .then(b.value.total_cmp(&a.value))
    });
    found
}

/// Root-to-leaf path maximizing summed durations; ties resolve to the
/// earlier-recorded child.
pub fn critical_path(tree: &ExecutionTree) -> (Vec<String>, f64) {
    fn descend(tree: &ExecutionTree, id: &str) -> (Vec<String>, f64) {
        let node = tree.get(id).unwrap();
        let mut best: Option<(Vec<String>, f64)> = None;
        for child in &node.children {
            let (path, length) = descend(tree, child);
            let better = match &best {
                None => true,
                Some((_, bl)) => length > *bl,
            };
            if better {
                best = Some((path, length));
            }
        }
        match best {
            Some((mut path, length)) => {
                path.insert(0, id.to_string());
                (path, length + node.duration())
            }
            None => (vec![id.to_string()], node.duration()),
        }
    }
    descend(tree, tree.root_id())
}

/// Weighted progress: completed work plus half credit for running work.
/// Sub-agent events weigh 1.0, tool calls 0.1, everything else 0; a tree
/// with no weighted events falls back to uniform node weights.
pub fn progress(tree: &ExecutionTree, _now: f64) -> f64 {
    let weight = |node: &ExecutionNode| match node.event_type {
        EventType::SubAgentStart => 1.0,
        EventType::ToolCallStart => 0.1,
        _ => 0.0,
    };
    let mut total = 0.0;
    let mut earned = 0.0;
    for node in tree.nodes_in_order() {
        let w = weight(node);
        total += w;
        earned += match node.status {
            NodeStatus::Completed => w,
            NodeStatus::Running => 0.5 * w,
            _ => 0.0,
        };
    }
    if total == 0.0 {
        let n = tree.len() as f64;
        let done = tree
            .nodes_in_order()
            .map(|node| match node.status {
                NodeStatus::Completed => 1.0,
                NodeStatus::Running => 0.5,
                _ => 0.0,
            })
            .sum::<f64>();
        return if n == 0.0 { 0.0 } else { done / n };
    }
    earned / total
}

/// Velocity-projected completion time; unknown below 10% progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eta {
    Unknown,
    At(f64),
}

pub fn eta(tree: &ExecutionTree, now: f64, started: f64) -> Eta {
    let p = progress(tree, now);
    if p < 0.10 || now <= started {
        return Eta::Unknown;
    }
    let velocity = p / (now - started);
    if velocity <= 0.0 {
        return Eta::Unknown;
    }
    Eta::At(now + (1.0 - p) / velocity)
}

fn node_to_json(tree: &ExecutionTree, id: &str) -> Value {
    let node = tree.get(id).unwrap();
    json!({
        "id": node.id,
        "type": node.event_type,
        "start_time": node.start,
        "end_time": node.end,
        "status": node.status,
        "metadata": node.metadata,
        "children": node.children.iter().map(|c| node_to_json(tree, c)).collect::<Vec<_>>(),
    })
}

/// JSON export: nested events plus the metric block (when the root is
/// closed). Lossless; see [`import_json`].
pub fn export_json(tree: &ExecutionTree) -> String {
    let root = tree.get(tree.root_id()).unwrap();
    let metric_block = metrics(tree)
        .ok()
        .map(|m| {
            json!({
                "total_time_ms": (m.t_total * 1000.0).round() as i64,
                "compute_time_ms": (m.t_compute * 1000.0).round() as i64,
                "tool_time_ms": (m.t_tools * 1000.0).round() as i64,
                "overhead_ms": (m.t_overhead * 1000.0).round() as i64,
                "peak_concurrent_agents": m.peak_concurrent_agents,
                "total_tool_calls": m.total_tool_calls,
                "total_tokens": m.total_tokens,
                "parallel_efficiency": m.parallel_efficiency,
                "success_rate": m.success_rate,
                "failure_rate": m.failure_rate,
                "retry_rate": m.retry_rate,
            })
        })
        .unwrap_or(Value::Null);
    let doc = json!({
        "task_id": tree.root_id(),
        "start_time": root.start,
        "end_time": root.end,
        "status": root.status,
        "events": [node_to_json(tree, tree.root_id())],
        "metrics": metric_block,
    });
    serde_json::to_string_pretty(&doc).expect("tree serializes")
}

fn flatten_event(value: &Value, parent: Option<&str>, out: &mut Vec<RawNode>) -> Result<(), TrackingError> {
    let id = value
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| TrackingError::Corrupt("event missing id".to_string()))?
        .to_string();
    let node = RawNode {
        id: id.clone(),
        event_type: serde_json::from_value(value.get("type").cloned().unwrap_or(Value::Null))
            .map_err(|e| TrackingError::Corrupt(e.to_string()))?,
        start: value.get("start_time").and_then(Value::as_f64).unwrap_or(0.0),
        end: value.get("end_time").and_then(Value::as_f64),
        status: serde_json::from_value(value.get("status").cloned().unwrap_or(Value::Null))
            .map_err(|e| TrackingError::Corrupt(e.to_string()))?,
        metadata: value
            .get("metadata")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default(),
        parent: parent.map(str::to_string),
    };
    out.push(node);
    if let Some(children) = value.get("children").and_then(Value::as_array) {
        for child in children {
            flatten_event(child, Some(&id), out)?;
        }
    }
    Ok(())
}

/// Parse a JSON export back into a tree. Invariants are re-verified;
/// violations are returned as errors.
pub fn import_json(text: &str) -> Result<ExecutionTree, TrackingError> {
    let (tree, violations) = import_json_unchecked(text)?;
    if let Some(v) = violations.into_iter().next() {
        return Err(TrackingError::Invariant(v));
    }
    Ok(tree)
}

/// Parse a JSON export without rejecting invariant violations; returns the
/// tree together with everything the verifier found. Lets tests inject
/// corrupted trees and watch the verifier catch them.
pub fn import_json_unchecked(
    text: &str,
) -> Result<(ExecutionTree, Vec<InvariantViolation>), TrackingError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| TrackingError::Corrupt(e.to_string()))?;
    let events = doc
        .get("events")
        .and_then(Value::as_array)
        .ok_or_else(|| TrackingError::Corrupt("missing events".to_string()))?;
    let mut raw = Vec::new();
    for event in events {
        flatten_event(event, None, &mut raw)?;
    }
    let violations = verify_raw(&raw);
    let tree = ExecutionTree::from_raw_unchecked(raw)?;
    Ok((tree, violations))
}

/// CSV export header, bit-exact.
pub const CSV_HEADER: &str = "event_id,type,start_time,end_time,duration_ms,status,parent_id";

/// Flattened CSV export: one row per node in recording order.
pub fn export_csv(tree: &ExecutionTree) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for node in tree.nodes_in_order() {
        let end = node.end.map(|e| e.to_string()).unwrap_or_default();
        let duration_ms = (node.duration() * 1000.0).round() as i64;
        let status = match node.status {
            NodeStatus::Pending => "PENDING",
            NodeStatus::Running => "RUNNING",
            NodeStatus::Completed => "COMPLETED",
            NodeStatus::Failed => "FAILED",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            node.id,
            node.event_type.as_str(),
            node.start,
            end,
            duration_ms,
            status,
            node.parent.as_deref().unwrap_or("null"),
        ));
    }
    out
}

/// Human-readable Markdown summary with timeline and metrics sections.
pub fn export_markdown(tree: &ExecutionTree) -> String {
    let root = tree.get(tree.root_id()).unwrap();
    let task = root
        .metadata
        .get("task_description")
        .and_then(Value::as_str)
        .unwrap_or("(untitled)");
    let status = format!("{:?}", root.status).to_uppercase();
    let mut out = String::from("# Execution Summary\n\n");
    out.push_str(&format!("**Task**: {task}\n"));
    out.push_str(&format!("**Status**: {status}\n"));
    out.push_str(&format!("**Duration**: {:.2} seconds\n\n", root.duration()));
    out.push_str("## Timeline\n\n");
    for (i, node) in tree.nodes_in_order().enumerate() {
        out.push_str(&format!(
            "{}. [{:.2}s] {}\n",
            i + 1,
            node.start - root.start,
            node.event_type.as_str()
        ));
    }
    out.push_str("\n## Performance Metrics\n\n");
    match metrics(tree) {
        Ok(m) => {
            out.push_str(&format!("- Total Time: {:.2}s\n", m.t_total));
            out.push_str(&format!("- Compute Time: {:.2}s\n", m.t_compute));
            out.push_str(&format!("- Tool Time: {:.2}s\n", m.t_tools));
            out.push_str(&format!("- Overhead: {:.2}s\n", m.t_overhead));
            out.push_str(&format!("- Tool Calls: {}\n", m.total_tool_calls));
            out.push_str(&format!("- Success Rate: {:.1}%\n", m.success_rate * 100.0));
            out.push_str(&format!("- Parallel Efficiency: {:.2}\n", m.parallel_efficiency));
        }
        Err(_) => out.push_str("- (root still open)\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(pairs: &[(&str, Value)]) -> Map<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn simple_tree() -> ExecutionTree {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        let r1 = tree.record(&root, EventType::ReasoningStep, Map::new(), 1.0).unwrap();
        tree.close(&r1, NodeStatus::Completed, 3.0).unwrap();
        let t1 = tree
            .record(&root, EventType::ToolCallStart, meta(&[("tool_name", json!("calculator"))]), 3.0)
            .unwrap();
        tree.close(&t1, NodeStatus::Completed, 4.0).unwrap();
        tree.close(&root, NodeStatus::Completed, 10.0).unwrap();
        tree
    }

    #[test]
    fn record_requires_running_parent() {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        tree.close(&root, NodeStatus::Completed, 1.0).unwrap();
        assert!(matches!(
            tree.record(&root, EventType::ReasoningStep, Map::new(), 2.0),
            Err(TrackingError::ParentNotRunning(_))
        ));
    }

    #[test]
    fn parent_cannot_close_before_children() {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        let child = tree.record(&root, EventType::ReasoningStep, Map::new(), 1.0).unwrap();
        assert!(matches!(
            tree.close(&root, NodeStatus::Completed, 2.0),
            Err(TrackingError::Invariant(InvariantViolation::TemporalInconsistency { .. }))
        ));
        tree.close(&child, NodeStatus::Completed, 2.0).unwrap();
        tree.close(&root, NodeStatus::Completed, 3.0).unwrap();
    }

    #[test]
    fn completed_parent_cannot_cover_failed_child() {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        let child = tree.record(&root, EventType::SubAgentStart, Map::new(), 1.0).unwrap();
        tree.close(&child, NodeStatus::Failed, 2.0).unwrap();
        assert!(matches!(
            tree.close(&root, NodeStatus::Completed, 3.0),
            Err(TrackingError::Invariant(InvariantViolation::StatusPropagation { .. }))
        ));
        tree.close(&root, NodeStatus::Failed, 3.0).unwrap();
    }

    #[test]
    fn verifier_catches_each_violation_class() {
        let ok = RawNode {
            id: "a".into(),
            event_type: EventType::TaskStart,
            start: 0.0,
            end: Some(10.0),
            status: NodeStatus::Completed,
            metadata: Map::new(),
            parent: None,
        };
        // Duplicate id.
        let dup = vec![ok.clone(), ok.clone()];
        assert!(verify_raw(&dup).iter().any(|v| matches!(v, InvariantViolation::DuplicateId(_))));
        // Temporal inconsistency.
        let escaped = vec![
            ok.clone(),
            RawNode { id: "b".into(), start: 5.0, end: Some(20.0), parent: Some("a".into()), ..ok.clone() },
        ];
        assert!(verify_raw(&escaped)
            .iter()
            .any(|v| matches!(v, InvariantViolation::TemporalInconsistency { .. })));
        // Status propagation.
        let failed_child = vec![
            ok.clone(),
            RawNode {
                id: "c".into(),
                start: 1.0,
                end: Some(2.0),
                status: NodeStatus::Failed,
                parent: Some("a".into()),
                ..ok.clone()
            },
        ];
        assert!(verify_raw(&failed_child)
            .iter()
            .any(|v| matches!(v, InvariantViolation::StatusPropagation { .. })));
        // Clean tree verifies clean.
        assert!(simple_tree().verify().is_empty());
    }

    #[test]
    fn metrics_hand_computed() {
        let tree = simple_tree();
        let m = metrics(&tree).unwrap();
        assert_eq!(m.t_total, 10.0);
        assert_eq!(m.t_compute, 2.0);
        assert_eq!(m.t_tools, 1.0);
        assert_eq!(m.t_overhead, 7.0);
        assert_eq!(m.total_tool_calls, 1);
        assert_eq!(m.success_rate, 1.0);
    }

    #[test]
    fn metrics_require_closed_root() {
        let tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        assert!(matches!(metrics(&tree), Err(TrackingError::RootOpen)));
    }

    #[test]
    fn parallel_efficiency_two_agents_full_window() {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        let a = tree.record(&root, EventType::SubAgentStart, Map::new(), 0.0).unwrap();
        let b = tree.record(&root, EventType::SubAgentStart, Map::new(), 0.0).unwrap();
        tree.close(&a, NodeStatus::Completed, 10.0).unwrap();
        tree.close(&b, NodeStatus::Completed, 10.0).unwrap();
        tree.close(&root, NodeStatus::Completed, 10.0).unwrap();
        let m = metrics(&tree).unwrap();
        assert_eq!(m.parallel_efficiency, 1.0);
        assert_eq!(m.peak_concurrent_agents, 2);
    }

    #[test]
    fn bottleneck_families() {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        // 40% of a 10s run.
        let heavy = tree.record(&root, EventType::ReasoningStep, Map::new(), 0.0).unwrap();
        tree.close(&heavy, NodeStatus::Completed, 4.0).unwrap();
        // Tool at 2.5x its baseline of 0.4s.
        let slow = tree
            .record(&root, EventType::ToolCallStart, meta(&[("tool_name", json!("web_search"))]), 4.0)
            .unwrap();
        tree.close(&slow, NodeStatus::Completed, 5.0).unwrap();
        // Agent with 1 failed child out of 10.
        let agent = tree.record(&root, EventType::SubAgentStart, Map::new(), 5.0).unwrap();
        for i in 0..10 {
            let c = tree.record(&agent, EventType::ReasoningStep, Map::new(), 5.0).unwrap();
            let status = if i == 0 { NodeStatus::Failed } else { NodeStatus::Completed };
            tree.close(&c, status, 5.5).unwrap();
        }
        tree.close(&agent, NodeStatus::Failed, 6.0).unwrap();
        tree.close(&root, NodeStatus::Failed, 10.0).unwrap();

        let baselines = BTreeMap::from([("web_search".to_string(), 0.4)]);
        let found = bottlenecks(&tree, &baselines);
        assert!(found.iter().any(|b| b.node_id == heavy && b.kind == BottleneckKind::High));
        assert!(found.iter().any(|b| b.node_id == slow && b.kind == BottleneckKind::SlowTool));
        // 10% failures stays under the 20% threshold.
        assert!(!found.iter().any(|b| b.kind == BottleneckKind::HighFailures));
        // Sorted by severity.
        let ranks: Vec<u8> = found.iter().map(|b| b.kind.severity_rank()).collect();
        assert!(ranks.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn critical_path_picks_longer_branch() {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        let short = tree.record(&root, EventType::SubAgentStart, Map::new(), 0.0).unwrap();
        tree.close(&short, NodeStatus::Completed, 3.0).unwrap();
        let long = tree.record(&root, EventType::SubAgentStart, Map::new(), 0.0).unwrap();
        tree.close(&long, NodeStatus::Completed, 5.0).unwrap();
        tree.close(&root, NodeStatus::Completed, 1.0_f64.max(5.0)).unwrap();
        // Root runs 5s total, but its own duration counts too.
        let (path, length) = critical_path(&tree);
        assert_eq!(path.last().unwrap(), &long);
        assert_eq!(length, 5.0 + 5.0);
    }

    #[test]
    fn critical_path_linear_tree_is_whole_chain() {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        let a = tree.record(&root, EventType::ReasoningStep, Map::new(), 0.0).unwrap();
        let b = tree.record(&a, EventType::ToolCallStart, Map::new(), 0.0).unwrap();
        tree.close(&b, NodeStatus::Completed, 1.0).unwrap();
        tree.close(&a, NodeStatus::Completed, 2.0).unwrap();
        tree.close(&root, NodeStatus::Completed, 3.0).unwrap();
        let (path, _) = critical_path(&tree);
        assert_eq!(path.len(), 3);
    }

    #[test]
    fn progress_and_eta() {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        let a = tree.record(&root, EventType::SubAgentStart, Map::new(), 0.0).unwrap();
        let _b = tree.record(&root, EventType::SubAgentStart, Map::new(), 0.0).unwrap();
        tree.close(&a, NodeStatus::Completed, 5.0).unwrap();
        // One of two equal-weight subtasks done; the other still running
        // counts half.
        assert_eq!(progress(&tree, 5.0), 0.75);
        match eta(&tree, 5.0, 0.0) {
            Eta::At(at) => assert!((at - (5.0 + 0.25 / (0.75 / 5.0))).abs() < 1e-9),
            Eta::Unknown => panic!("progress is over 10%"),
        }
    }

    #[test]
    fn eta_unknown_below_ten_percent() {
        let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
        let root = tree.root_id().to_string();
        for _ in 0..20 {
            tree.record(&root, EventType::SubAgentStart, Map::new(), 0.0).unwrap();
        }
        // 0 of 20 complete: progress = 0.5 * 20 / 20?? all running -> 0.5.
        // Force low progress by closing nothing and weighting: use failed.
        let ids: Vec<String> = tree.nodes_in_order().skip(1).map(|n| n.id.clone()).collect();
        for id in &ids {
            tree.close(id, NodeStatus::Failed, 1.0).unwrap();
        }
        assert!(progress(&tree, 1.0) < 0.10);
        assert_eq!(eta(&tree, 1.0, 0.0), Eta::Unknown);
    }

    #[test]
    fn json_round_trip_lossless() {
        let tree = simple_tree();
        let exported = export_json(&tree);
        let imported = import_json(&exported).unwrap();
        assert_eq!(imported.len(), tree.len());
        for node in tree.nodes_in_order() {
            let other = imported.get(&node.id).unwrap();
            assert_eq!(other, node);
        }
        let value: Value = serde_json::from_str(&exported).unwrap();
        assert!(value.get("task_id").is_some());
        assert!(value.get("metrics").and_then(|m| m.get("total_time_ms")).is_some());
    }

    #[test]
    fn csv_header_and_row_count() {
        let tree = simple_tree();
        let csv = export_csv(&tree);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(csv.lines().count(), tree.len() + 1);
        assert!(csv.lines().nth(1).unwrap().ends_with("null"));
    }

    #[test]
    fn markdown_has_metrics_section() {
        let md = export_markdown(&simple_tree());
        assert!(md.contains("# Execution Summary"));
        assert!(md.contains("## Timeline"));
        assert!(md.contains("## Performance Metrics"));
    }
}
