//! Tool registry and metadata, parameter validation, health accounting, and
//! the built-in tools: calculator, file operations, and web search.

mod calculator;
mod fileops;
mod websearch;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use calculator::{calc_eval, CalcError, CalcValue, CalculatorTool};
pub use fileops::{validate_path, FileLimits, FileOp, FileOperationsTool, PathRejection};
pub use websearch::{
    FixtureSearchClient, SearchClient, SearchClientError, SearchResult, Verbosity, WebSearchTool,
};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("a tool named `{0}` is already registered")]
    Duplicate(String),
    #[error("no tool named `{0}` is registered")]
    Unknown(String),
    #[error("tool metadata invalid: {0}")]
    BadMetadata(String),
}

/// The eight-category tool taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ToolCategory {
    InformationRetrieval,
    CodeExecution,
    FileOperations,
    Computation,
    Communication,
    DataProcessing,
    System,
    ExternalApi,
}

/// JSON parameter types accepted by tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Number,
    Integer,
    Boolean,
    Array,
    Object,
}

impl ParamType {
    fn matches(&self, value: &Value) -> bool {
        match self {
            ParamType::String => value.is_string(),
            ParamType::Number => value.is_number(),
            ParamType::Integer => value.is_i64() || value.is_u64(),
            ParamType::Boolean => value.is_boolean(),
            ParamType::Array => value.is_array(),
            ParamType::Object => value.is_object(),
        }
    }
}

/// One declared parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub param_type: ParamType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed: Option<Vec<Value>>,
}

impl ParamSpec {
    pub fn required(name: &str, param_type: ParamType) -> Self {
        Self { name: name.to_string(), param_type, required: true, default: None, min: None, max: None, allowed: None }
    }

    pub fn optional(name: &str, param_type: ParamType, default: Option<Value>) -> Self {
        Self { name: name.to_string(), param_type, required: false, default, min: None, max: None, allowed: None }
    }
}

/// Declarative tool description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolMetadata {
    pub name: String,
    pub description: String,
    pub category: ToolCategory,
    pub params: Vec<ParamSpec>,
    pub version: String,
    pub cost_estimate: f64,
    pub default_timeout: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

impl ToolMetadata {
    pub fn validate(&self) -> Result<(), ToolError> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.params {
            if !seen.insert(&p.name) {
                return Err(ToolError::BadMetadata(format!("duplicate parameter `{}`", p.name)));
            }
        }
        Ok(())
    }
}

/// A single validation failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub param: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingRequired,
    TypeMismatch { expected: ParamType },
    ConstraintViolated { reason: String },
}

/// Check arguments against a tool's parameter specs: required parameters
/// present, types matching, constraints satisfied. Violations are data, not
/// faults.
pub fn validate_params(meta: &ToolMetadata, args: &Map<String, Value>) -> Vec<Violation> {
    let mut violations = Vec::new();
    for spec in &meta.params {
        match args.get(&spec.name) {
            None => {
                if spec.required {
                    violations.push(Violation {
                        param: spec.name.clone(),
                        kind: ViolationKind::MissingRequired,
                    });
                }
            }
            Some(value) => {
                if !spec.param_type.matches(value) {
                    violations.push(Violation {
                        param: spec.name.clone(),
                        kind: ViolationKind::TypeMismatch { expected: spec.param_type },
                    });
                    continue;
                }
                if let (Some(min), Some(n)) = (spec.min, value.as_f64()) {
                    if n < min {
                        violations.push(Violation {
                            param: spec.name.clone(),
                            kind: ViolationKind::ConstraintViolated {
                                reason: format!("{n} below minimum {min}"),
                            },
                        });
                    }
                }
                if let (Some(max), Some(n)) = (spec.max, value.as_f64()) {
                    if n > max {
                        violations.push(Violation {
                            param: spec.name.clone(),
                            kind: ViolationKind::ConstraintViolated {
                                reason: format!("{n} above maximum {max}"),
                            },
                        });
                    }
                }
                if let Some(allowed) = &spec.allowed {
                    if !allowed.contains(value) {
                        violations.push(Violation {
                            param: spec.name.clone(),
                            kind: ViolationKind::ConstraintViolated {
                                reason: "value not in allowed set".to_string(),
                            },
                        });
                    }
                }
            }
        }
    }
    violations
}

/// Structured error carried by a failed tool result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolErrorInfo {
    pub code: String,
    pub message: String,
    pub retryable: bool,
}

/// Outcome of one tool execution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolResult {
    pub success: bool,
    pub value: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ToolErrorInfo>,
    pub duration: f64,
}

impl ToolResult {
    pub fn success(value: Value) -> Self {
        Self { success: true, value, error: None, duration: 0.0 }
    }

    pub fn failure(code: &str, message: impl Into<String>, retryable: bool) -> Self {
        Self {
            success: false,
            value: Value::Null,
            error: Some(ToolErrorInfo { code: code.to_string(), message: message.into(), retryable }),
            duration: 0.0,
        }
    }
}

/// A registrable tool.
pub trait Tool: Send + Sync {
    fn metadata(&self) -> &ToolMetadata;
    fn execute(&self, args: &Map<String, Value>) -> ToolResult;
}

/// Success/latency accounting for one tool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolHealth {
    pub successes: u64,
    pub total: u64,
    pub avg_latency: f64,
    pub timeout: f64,
}

/// `health = (successes/total) * (1 - avg_latency/timeout)`; `None` when a
/// tool has never run. Scores under 0.5 warrant an alert.
pub fn health(stats: &ToolHealth) -> Option<f64> {
    if stats.total == 0 {
        return None;
    }
    let success_rate = stats.successes as f64 / stats.total as f64;
    let latency_factor = 1.0 - stats.avg_latency / stats.timeout;
    Some(success_rate * latency_factor)
}

pub const HEALTH_ALERT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Default, Clone, Copy)]
struct HealthAccumulator {
    successes: u64,
    total: u64,
    total_latency: f64,
}

/// Name-keyed tool registry with health accounting. Lookups are concurrent;
/// registration is serialized; registering a duplicate name is an error.
#[derive(Default)]
pub struct ToolRegistry {
    tools: RwLock<HashMap<String, Arc<dyn Tool>>>,
    health: Mutex<HashMap<String, HealthAccumulator>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with the built-in tools. File operations are
    /// rooted at the given directories.
    pub fn with_builtins(allowed_roots: Vec<std::path::PathBuf>) -> Self {
        let registry = Self::new();
        registry.register(Arc::new(CalculatorTool::default())).unwrap();
        registry.register(Arc::new(FileOperationsTool::new(allowed_roots))).unwrap();
        registry
    }

    pub fn register(&self, tool: Arc<dyn Tool>) -> Result<(), ToolError> {
        tool.metadata().validate()?;
        let name = tool.metadata().name.clone();
        let mut tools = self.tools.write().unwrap();
        if tools.contains_key(&name) {
            return Err(ToolError::Duplicate(name));
        }
        tools.insert(name, tool);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Tool>> {
        self.tools.read().unwrap().get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.tools.read().unwrap().keys().cloned().collect();
        names.sort();
        names
    }

    pub fn descriptors(&self) -> Vec<ToolMetadata> {
        let tools = self.tools.read().unwrap();
        let mut metas: Vec<ToolMetadata> = tools.values().map(|t| t.metadata().clone()).collect();
        metas.sort_by(|a, b| a.name.cmp(&b.name));
        metas
    }

    /// Validate arguments, run the tool, time it, and record health stats.
    pub fn execute(&self, name: &str, args: &Map<String, Value>) -> Result<ToolResult, ToolError> {
        let tool = self.get(name).ok_or_else(|| ToolError::Unknown(name.to_string()))?;
        let violations = validate_params(tool.metadata(), args);
        if !violations.is_empty() {
            let detail = serde_json::to_string(&violations).unwrap_or_default();
            let mut result =
                ToolResult::failure("INVALID_INPUT", format!("parameter validation failed: {detail}"), false);
            result.duration = 0.0;
            self.record_health(name, false, 0.0, tool.metadata().default_timeout);
            return Ok(result);
        }
        let start = Instant::now();
        let mut result = tool.execute(args);
        result.duration = start.elapsed().as_secs_f64();
        self.record_health(name, result.success, result.duration, tool.metadata().default_timeout);
        Ok(result)
    }

    fn record_health(&self, name: &str, success: bool, latency: f64, _timeout: f64) {
        let mut health = self.health.lock().unwrap();
        let acc = health.entry(name.to_string()).or_default();
        acc.total += 1;
        if success {
            acc.successes += 1;
        }
        acc.total_latency += latency;
    }

    pub fn health_of(&self, name: &str) -> Option<ToolHealth> {
        let timeout = self.get(name)?.metadata().default_timeout;
        let health = self.health.lock().unwrap();
        let acc = health.get(name)?;
        Some(ToolHealth {
            successes: acc.successes,
            total: acc.total,
            avg_latency: if acc.total == 0 { 0.0 } else { acc.total_latency / acc.total as f64 },
            timeout,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn args(pairs: &[(&str, Value)]) -> Map<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn validate_params_families() {
        let meta = CalculatorTool::default().metadata().clone();
        assert!(validate_params(&meta, &args(&[("expression", json!("2+2"))])).is_empty());
        let missing = validate_params(&meta, &args(&[]));
        assert_eq!(missing[0].kind, ViolationKind::MissingRequired);
        let wrong = validate_params(&meta, &args(&[("expression", json!(7))]));
        assert!(matches!(wrong[0].kind, ViolationKind::TypeMismatch { .. }));
    }

    #[test]
    fn constraint_checks() {
        let mut meta = CalculatorTool::default().metadata().clone();
        meta.params = vec![ParamSpec {
            name: "count".to_string(),
            param_type: ParamType::Integer,
            required: true,
            default: None,
            min: Some(1.0),
            max: Some(10.0),
            allowed: None,
        }];
        assert!(validate_params(&meta, &args(&[("count", json!(5))])).is_empty());
        let low = validate_params(&meta, &args(&[("count", json!(0))]));
        assert!(matches!(low[0].kind, ViolationKind::ConstraintViolated { .. }));
    }

    #[test]
    fn registry_duplicate_rejected() {
        let registry = ToolRegistry::new();
        registry.register(Arc::new(CalculatorTool::default())).unwrap();
        assert!(matches!(
            registry.register(Arc::new(CalculatorTool::default())),
            Err(ToolError::Duplicate(_))
        ));
    }

    #[test]
    fn registry_executes_and_tracks_health() {
        let registry = ToolRegistry::new();
        registry.register(Arc::new(CalculatorTool::default())).unwrap();
        let ok = registry.execute("calculator", &args(&[("expression", json!("2+2"))])).unwrap();
        assert!(ok.success);
        let bad = registry.execute("calculator", &args(&[])).unwrap();
        assert!(!bad.success);
        let stats = registry.health_of("calculator").unwrap();
        assert_eq!(stats.total, 2);
        assert_eq!(stats.successes, 1);
        assert!(registry.execute("missing", &args(&[])).is_err());
    }

    #[test]
    fn health_formula() {
        let perfect = ToolHealth { successes: 100, total: 100, avg_latency: 0.0, timeout: 10.0 };
        assert_eq!(health(&perfect), Some(1.0));

        let half = ToolHealth { successes: 50, total: 100, avg_latency: 5.0, timeout: 10.0 };
        let h = health(&half).unwrap();
        assert!((h - 0.25).abs() < 1e-12);
        assert!(h < HEALTH_ALERT_THRESHOLD);

        let good = ToolHealth { successes: 90, total: 100, avg_latency: 1.0, timeout: 10.0 };
        let h = health(&good).unwrap();
        assert!((h - 0.81).abs() < 1e-12);
        assert!(h >= HEALTH_ALERT_THRESHOLD);

        let empty = ToolHealth { successes: 0, total: 0, avg_latency: 0.0, timeout: 10.0 };
        assert_eq!(health(&empty), None);
    }
}
