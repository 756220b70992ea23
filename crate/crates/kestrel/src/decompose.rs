//! Task decomposition: strategy selection, prompt rendering, tolerant JSON
//! parsing of model output into a subtask DAG, quality metrics, and
//! topological scheduling.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::complexity::{DependencySummary, RoutingThresholds, Strategy};

const PARALLEL_TEMPLATE: &str = include_str!("../data/templates/parallel.txt");
const SEQUENTIAL_TEMPLATE: &str = include_str!("../data/templates/sequential.txt");
const HIERARCHICAL_TEMPLATE: &str = include_str!("../data/templates/hierarchical.txt");
const HYBRID_TEMPLATE: &str = include_str!("../data/templates/hybrid.txt");

/// Subtask counts outside this range are rejected as runaway model output.
pub const MIN_SUBTASKS: usize = 2;
pub const MAX_SUBTASKS: usize = 10;

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("no JSON object found in model output")]
    NoJson,
    #[error("malformed JSON in model output: {0}")]
    BadJson(String),
    #[error("decomposition JSON missing field `{0}`")]
    MissingField(&'static str),
    #[error("duplicate subtask id `{0}`")]
    DuplicateId(String),
    #[error("subtask `{id}` depends on unknown subtask `{dep}`")]
    UnknownDependency { id: String, dep: String },
    #[error("dependency cycle involving `{0}`")]
    Cycle(String),
    #[error("subtask count {0} outside the accepted range {MIN_SUBTASKS}-{MAX_SUBTASKS}")]
    BadCount(usize),
    #[error("strategy {0} violated: {1}")]
    StrategyShape(Strategy, &'static str),
    #[error("cannot render a decomposition prompt for SINGLE strategy")]
    SingleStrategy,
    #[error("graph is empty")]
    EmptyGraph,
}

/// Required specialization for a subtask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Specialization {
    Research,
    Coding,
    Analysis,
    Synthesis,
    Data,
    Creative,
    General,
}

impl Specialization {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "research" => Some(Self::Research),
            "coding" => Some(Self::Coding),
            "analysis" => Some(Self::Analysis),
            "synthesis" => Some(Self::Synthesis),
            "data" => Some(Self::Data),
            "creative" => Some(Self::Creative),
            "general" => Some(Self::General),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Priority {
    High,
    Medium,
    Low,
}

/// One unit of decomposed work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: String,
    pub description: String,
    pub depends_on: Vec<String>,
    pub expected_output: String,
    pub estimated_complexity: f64,
    pub specialization: Specialization,
    pub priority: Priority,
}

/// Decomposed subtasks with their dependency DAG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubtaskGraph {
    pub subtasks: Vec<Subtask>,
    pub strategy: Strategy,
    pub parallel_groups: Option<Vec<Vec<String>>>,
    pub manager: Option<Subtask>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SubtaskGraph {
    /// All nodes including the manager, in declaration order.
    pub fn nodes(&self) -> Vec<&Subtask> {
        let mut nodes: Vec<&Subtask> = self.subtasks.iter().collect();
        if let Some(manager) = &self.manager {
            nodes.push(manager);
        }
        nodes
    }

    /// Edges as `(dependency, dependent)` pairs derived from `depends_on`.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.nodes()
            .iter()
            .flat_map(|s| s.depends_on.iter().map(|d| (d.clone(), s.id.clone())))
            .collect()
    }

    pub fn subtask(&self, id: &str) -> Option<&Subtask> {
        self.nodes().into_iter().find(|s| s.id == id)
    }

    /// Structural validation: unique ids, known dependencies, acyclicity,
    /// and the shape demanded by the strategy tag.
    pub fn validate(&self) -> Result<(), DecomposeError> {
        let nodes = self.nodes();
        let mut ids = BTreeSet::new();
        for node in &nodes {
            if !ids.insert(node.id.clone()) {
                return Err(DecomposeError::DuplicateId(node.id.clone()));
            }
        }
        for node in &nodes {
            for dep in &node.depends_on {
                if !ids.contains(dep) {
                    return Err(DecomposeError::UnknownDependency {
                        id: node.id.clone(),
                        dep: dep.clone(),
                    });
                }
            }
        }
        topological_levels(self)?;
        match self.strategy {
            Strategy::Parallel if !self.edges().is_empty() => Err(DecomposeError::StrategyShape(
                Strategy::Parallel,
                "parallel decomposition must have no dependencies",
            )),
            Strategy::Sequential if !is_linear_chain(&nodes) => Err(DecomposeError::StrategyShape(
                Strategy::Sequential,
                "sequential decomposition must form a single chain",
            )),
            _ => Ok(()),
        }
    }

    /// Summarize the dependency shape for routing decisions.
    pub fn dependency_summary(&self) -> DependencySummary {
        if self.edges().is_empty() {
            DependencySummary::Independent
        } else if is_linear_chain(&self.nodes()) {
            DependencySummary::LinearChain
        } else {
            DependencySummary::Mixed
        }
    }
}

/// Every node has at most one predecessor and one successor and the chain
/// covers all nodes.
fn is_linear_chain(nodes: &[&Subtask]) -> bool {
    if nodes.is_empty() {
        return false;
    }
    let mut succ_count: BTreeMap<&str, usize> = BTreeMap::new();
    let mut pred_count: BTreeMap<&str, usize> = BTreeMap::new();
    for node in nodes {
        pred_count.entry(node.id.as_str()).or_insert(0);
        succ_count.entry(node.id.as_str()).or_insert(0);
    }
    let mut edge_count = 0;
    for node in nodes {
        for dep in &node.depends_on {
            *pred_count.get_mut(node.id.as_str()).unwrap() += 1;
            if let Some(c) = succ_count.get_mut(dep.as_str()) {
                *c += 1;
            }
            edge_count += 1;
        }
    }
    let ok_degrees = nodes.iter().all(|n| {
        pred_count[n.id.as_str()] <= 1 && succ_count[n.id.as_str()] <= 1
    });
    // n-1 edges with degree caps on n nodes means a single connected path.
    ok_degrees && edge_count + 1 == nodes.len()
}

/// Metrics describing how well a decomposition covers and structures a task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub coverage: f64,
    pub granularity: f64,
    pub parallelism: f64,
}

/// Pick a decomposition strategy for a task that already routed above `tau`.
pub fn select_strategy(
    score: f64,
    thresholds: &RoutingThresholds,
    deps: DependencySummary,
) -> Strategy {
    if score >= thresholds.tau_h {
        Strategy::Hierarchical
    } else {
        match deps {
            DependencySummary::Independent => Strategy::Parallel,
            DependencySummary::LinearChain => Strategy::Sequential,
            DependencySummary::Mixed => Strategy::Hybrid,
        }
    }
}

/// The strategy-specific prompt with `{task}` interpolated. Only the
/// `{task}` marker is substituted; the JSON braces in the template are
/// literal.
pub fn render_decomposition_prompt(task: &str, strategy: Strategy) -> Result<String, DecomposeError> {
    let template = match strategy {
        Strategy::Parallel => PARALLEL_TEMPLATE,
        Strategy::Sequential => SEQUENTIAL_TEMPLATE,
        Strategy::Hierarchical => HIERARCHICAL_TEMPLATE,
        Strategy::Hybrid => HYBRID_TEMPLATE,
        Strategy::Single => return Err(DecomposeError::SingleStrategy),
    };
    Ok(template.replace("{task}", task))
}

/// First balanced `{...}` region, tolerating surrounding prose and code
/// fences. String-aware so braces inside JSON strings do not confuse the
/// scan.
fn extract_json(text: &str) -> Option<&str> {
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

fn parse_subtask(value: &Value, warnings: &mut Vec<String>) -> Result<Subtask, DecomposeError> {
    let id = value
        .get("id")
        .and_then(Value::as_str)
        .ok_or(DecomposeError::MissingField("id"))?
        .to_string();
    let description = value
        .get("description")
        .and_then(Value::as_str)
        .ok_or(DecomposeError::MissingField("description"))?
        .to_string();
    let depends_on = value
        .get("depends_on")
        .and_then(Value::as_array)
        .map(|deps| {
            deps.iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    let expected_output = value
        .get("expected_output")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let estimated_complexity = value
        .get("estimated_complexity")
        .and_then(Value::as_f64)
        .unwrap_or(5.0)
        .clamp(0.0, 10.0);
    let specialization = match value.get("required_specialization").and_then(Value::as_str) {
        None => Specialization::General,
        Some(raw) => Specialization::parse(raw).unwrap_or_else(|| {
            warnings.push(format!("unknown specialization `{raw}` on `{id}`, using general"));
            Specialization::General
        }),
    };
    let priority = match value.get("priority").and_then(Value::as_str) {
        Some(p) => match p.trim().to_lowercase().as_str() {
            "high" => Priority::High,
            "low" => Priority::Low,
            _ => Priority::Medium,
        },
        None => Priority::Medium,
    };
    Ok(Subtask {
        id,
        description,
        depends_on,
        expected_output,
        estimated_complexity,
        specialization,
        priority,
    })
}

/// Parse model output into a validated [`SubtaskGraph`].
///
/// Missing optional fields default (priority MEDIUM, complexity 5.0,
/// specialization general). Structural problems (cycles, duplicate ids,
/// out-of-range subtask counts) are errors, not warnings.
pub fn parse_decomposition(
    model_output: &str,
    strategy: Strategy,
) -> Result<SubtaskGraph, DecomposeError> {
    let json_text = extract_json(model_output).ok_or(DecomposeError::NoJson)?;
    let root: Value =
        serde_json::from_str(json_text).map_err(|e| DecomposeError::BadJson(e.to_string()))?;
    let mut warnings = Vec::new();

    let graph = if strategy == Strategy::Hierarchical {
        let manager_value = root
            .get("manager_task")
            .ok_or(DecomposeError::MissingField("manager_task"))?;
        let workers_value = root
            .get("worker_subtasks")
            .and_then(Value::as_array)
            .ok_or(DecomposeError::MissingField("worker_subtasks"))?;
        let workers: Vec<Subtask> = workers_value
            .iter()
            .map(|w| parse_subtask(w, &mut warnings))
            .collect::<Result<_, _>>()?;
        if workers.is_empty() || workers.len() > MAX_SUBTASKS {
            return Err(DecomposeError::BadCount(workers.len()));
        }
        let manager = Subtask {
            id: "manager".to_string(),
            description: manager_value
                .get("description")
                .and_then(Value::as_str)
                .ok_or(DecomposeError::MissingField("manager_task.description"))?
                .to_string(),
            depends_on: workers.iter().map(|w| w.id.clone()).collect(),
            expected_output: manager_value
                .get("responsibilities")
                .and_then(Value::as_array)
                .map(|r| {
                    r.iter()
                        .filter_map(Value::as_str)
                        .collect::<Vec<_>>()
                        .join(", ")
                })
                .unwrap_or_default(),
            estimated_complexity: 5.0,
            specialization: Specialization::Synthesis,
            priority: Priority::High,
        };
        SubtaskGraph {
            subtasks: workers,
            strategy,
            parallel_groups: None,
            manager: Some(manager),
            warnings,
        }
    } else {
        let subtasks_value = root
            .get("subtasks")
            .and_then(Value::as_array)
            .ok_or(DecomposeError::MissingField("subtasks"))?;
        let subtasks: Vec<Subtask> = subtasks_value
            .iter()
            .map(|s| parse_subtask(s, &mut warnings))
            .collect::<Result<_, _>>()?;
        if subtasks.len() < MIN_SUBTASKS || subtasks.len() > MAX_SUBTASKS {
            return Err(DecomposeError::BadCount(subtasks.len()));
        }
        let parallel_groups = root.get("parallel_groups").and_then(Value::as_array).map(|groups| {
            groups
                .iter()
                .filter_map(Value::as_array)
                .map(|g| g.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .collect()
        });
        SubtaskGraph { subtasks, strategy, parallel_groups, manager: None, warnings }
    };

    graph.validate()?;
    Ok(graph)
}

/// Decomposition quality: aspect coverage, mean subtask complexity, and the
/// fraction of dependency-free subtasks.
pub fn quality(
    graph: &SubtaskGraph,
    aspects_total: usize,
    aspects_covered: usize,
) -> Result<QualityMetrics, DecomposeError> {
    let nodes = graph.nodes();
    if nodes.is_empty() || aspects_total == 0 {
        return Err(DecomposeError::EmptyGraph);
    }
    let coverage = aspects_covered as f64 / aspects_total as f64;
    let granularity =
        nodes.iter().map(|s| s.estimated_complexity).sum::<f64>() / nodes.len() as f64;
    let roots = nodes.iter().filter(|s| s.depends_on.is_empty()).count();
    let parallelism = roots as f64 / nodes.len() as f64;
    Ok(QualityMetrics { coverage, granularity, parallelism })
}

/// Kahn's algorithm by levels: level 0 holds the roots, and every node's
/// dependencies sit in strictly earlier levels.
pub fn topological_levels(graph: &SubtaskGraph) -> Result<Vec<Vec<String>>, DecomposeError> {
    let nodes = graph.nodes();
    let ids: Vec<String> = nodes.iter().map(|s| s.id.clone()).collect();
    let mut remaining_deps: BTreeMap<String, BTreeSet<String>> = nodes
        .iter()
        .map(|s| (s.id.clone(), s.depends_on.iter().cloned().collect()))
        .collect();
    let mut placed: BTreeSet<String> = BTreeSet::new();
    let mut levels: Vec<Vec<String>> = Vec::new();
    while placed.len() < ids.len() {
        let ready: Vec<String> = ids
            .iter()
            .filter(|id| !placed.contains(*id))
            .filter(|id| remaining_deps[*id].iter().all(|d| placed.contains(d)))
            .cloned()
            .collect();
        if ready.is_empty() {
            let stuck = ids.iter().find(|id| !placed.contains(*id)).unwrap().clone();
            return Err(DecomposeError::Cycle(stuck));
        }
        for id in &ready {
            placed.insert(id.clone());
            remaining_deps.remove(id);
        }
        levels.push(ready);
    }
    Ok(levels)
}
