//! Configuration loading: environment substitution, `!include` directives,
//! `extends` inheritance with deep merge, phase-by-phase schema validation,
//! and default injection. Documents are immutable once loaded.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("environment variable `{0}` is not set and has no default")]
    UnresolvedVariable(String),
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("io error reading `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("include/extends cycle through `{0}`")]
    Cycle(PathBuf),
    #[error("!include expects a string path, got {0}")]
    BadInclude(String),
    #[error("config failed validation with {0} error(s)")]
    Invalid(usize),
}

/// A loaded configuration document: a JSON-shaped tree plus its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDocument {
    pub tree: Value,
    pub source_path: Option<PathBuf>,
}

impl ConfigDocument {
    pub fn empty() -> Self {
        Self { tree: Value::Object(Map::new()), source_path: None }
    }

    pub fn from_value(tree: Value) -> Self {
        Self { tree, source_path: None }
    }

    /// Parse YAML or JSON text after substituting `${VAR}` markers from
    /// `env`. `extends` and `!include` are not resolved here; use
    /// [`load_with_env`] for file-based loading.
    pub fn from_str_with_env(
        text: &str,
        env: &BTreeMap<String, String>,
    ) -> Result<Self, ConfigError> {
        let substituted = substitute_env(text, env)?;
        let yaml: serde_yaml::Value =
            serde_yaml::from_str(&substituted).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(Self { tree: yaml_to_json(yaml, None, &mut Vec::new())?, source_path: None })
    }

    /// Value at a dotted path.
    pub fn get(&self, path: &str) -> Option<&Value> {
        get_path(&self.tree, path)
    }

    pub fn get_f64(&self, path: &str) -> Option<f64> {
        self.get(path).and_then(Value::as_f64)
    }

    pub fn get_u64(&self, path: &str) -> Option<u64> {
        self.get(path).and_then(Value::as_u64)
    }

    pub fn get_str(&self, path: &str) -> Option<&str> {
        self.get(path).and_then(Value::as_str)
    }

    pub fn get_bool(&self, path: &str) -> Option<bool> {
        self.get(path).and_then(Value::as_bool)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(&self.tree).unwrap_or_default()
    }
}

/// Replace `${VAR}` and `${VAR:default}` markers. Unset variables without a
/// default are errors naming the variable; text without markers passes
/// through unchanged.
pub fn substitute_env(text: &str, env: &BTreeMap<String, String>) -> Result<String, ConfigError> {
    let marker = Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::([^}]*))?\}").unwrap();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in marker.captures_iter(text) {
        let whole = caps.get(0).unwrap();
        out.push_str(&text[last..whole.start()]);
        let name = &caps[1];
        match env.get(name) {
            Some(value) => out.push_str(value),
            None => match caps.get(2) {
                Some(default) => out.push_str(default.as_str()),
                None => return Err(ConfigError::UnresolvedVariable(name.to_string())),
            },
        }
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Convert YAML to a JSON-shaped tree, resolving `!include` tags relative
/// to `base_dir` with cycle detection.
fn yaml_to_json(
    value: serde_yaml::Value,
    base_dir: Option<&Path>,
    visited: &mut Vec<PathBuf>,
) -> Result<Value, ConfigError> {
    use serde_yaml::Value as Y;
    Ok(match value {
        Y::Null => Value::Null,
        Y::Bool(b) => Value::Bool(b),
        Y::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::from(i)
            } else if let Some(u) = n.as_u64() {
                Value::from(u)
            } else {
                Value::from(n.as_f64().unwrap_or(0.0))
            }
        }
        Y::String(s) => Value::String(s),
        Y::Sequence(items) => Value::Array(
            items
                .into_iter()
                .map(|v| yaml_to_json(v, base_dir, visited))
                .collect::<Result<_, _>>()?,
        ),
        Y::Mapping(map) => {
            let mut out = Map::new();
            for (k, v) in map {
                let key = match k {
                    Y::String(s) => s,
                    other => serde_yaml::to_string(&other)
                        .unwrap_or_default()
                        .trim()
                        .to_string(),
                };
                out.insert(key, yaml_to_json(v, base_dir, visited)?);
            }
            Value::Object(out)
        }
        Y::Tagged(tagged) => {
            if tagged.tag == "!include" {
                let rel = tagged
                    .value
                    .as_str()
                    .ok_or_else(|| ConfigError::BadInclude(format!("{:?}", tagged.value)))?
                    .to_string();
                let dir = base_dir.ok_or_else(|| {
                    ConfigError::BadInclude("!include needs a file-based document".to_string())
                })?;
                let path = dir.join(rel);
                load_tree(&path, &BTreeMap::new(), visited)?
            } else {
                yaml_to_json(tagged.value, base_dir, visited)?
            }
        }
    })
}

fn load_tree(
    path: &Path,
    env: &BTreeMap<String, String>,
    visited: &mut Vec<PathBuf>,
) -> Result<Value, ConfigError> {
    let canonical = path
        .canonicalize()
        .unwrap_or_else(|_| path.to_path_buf());
    if visited.contains(&canonical) {
        return Err(ConfigError::Cycle(canonical));
    }
    visited.push(canonical.clone());
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let substituted = substitute_env(&text, env)?;
    let yaml: serde_yaml::Value =
        serde_yaml::from_str(&substituted).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let base_dir = path.parent().map(Path::to_path_buf);
    let mut tree = yaml_to_json(yaml, base_dir.as_deref(), visited)?;

    // `extends: <path>` pulls in a parent document and deep-merges this one
    // over it.
    if let Some(parent_rel) = tree.get("extends").and_then(Value::as_str).map(str::to_string) {
        if let Value::Object(map) = &mut tree {
            map.remove("extends");
        }
        let parent_path = base_dir.unwrap_or_else(|| PathBuf::from(".")).join(parent_rel);
        let parent = load_tree(&parent_path, env, visited)?;
        tree = merge_values(parent, tree);
    }
    visited.pop();
    Ok(tree)
}

/// Load a document from a YAML or JSON file: substitute environment
/// variables, resolve `!include` directives, and follow `extends` chains.
pub fn load_with_env(path: &Path, env: &BTreeMap<String, String>) -> Result<ConfigDocument, ConfigError> {
    let mut visited = Vec::new();
    let tree = load_tree(path, env, &mut visited)?;
    Ok(ConfigDocument { tree, source_path: Some(path.to_path_buf()) })
}

/// Load using the process environment.
pub fn load(path: &Path) -> Result<ConfigDocument, ConfigError> {
    let env: BTreeMap<String, String> = std::env::vars().collect();
    load_with_env(path, &env)
}

fn merge_values(base: Value, over: Value) -> Value {
    match (base, over) {
        (Value::Object(mut base_map), Value::Object(over_map)) => {
            for (key, over_value) in over_map {
                let merged = match base_map.remove(&key) {
                    Some(base_value) => merge_values(base_value, over_value),
                    None => over_value,
                };
                base_map.insert(key, merged);
            }
            Value::Object(base_map)
        }
        // Scalars and lists in the override replace the base outright.
        (_, over) => over,
    }
}

/// Deep merge: nested maps merge recursively; scalars and lists in the
/// override replace the base; keys absent from the override keep their base
/// values.
pub fn merge(base: &ConfigDocument, over: &ConfigDocument) -> ConfigDocument {
    ConfigDocument {
        tree: merge_values(base.tree.clone(), over.tree.clone()),
        source_path: over.source_path.clone().or_else(|| base.source_path.clone()),
    }
}

fn get_path<'a>(tree: &'a Value, path: &str) -> Option<&'a Value> {
    let mut current = tree;
    for part in path.split('.') {
        current = current.get(part)?;
    }
    Some(current)
}

fn set_path(tree: &mut Value, path: &str, value: Value) {
    let mut current = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !current.is_object() {
            return;
        }
        current = current
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    if let Some(map) = current.as_object_mut() {
        map.entry(parts[parts.len() - 1].to_string()).or_insert(value);
    }
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    String,
    Int,
    Float,
    Bool,
    List,
    Map,
}

impl FieldType {
    fn matches(&self, value: &Value) -> bool {
        match self {
            FieldType::String => value.is_string(),
            FieldType::Int => value.is_i64() || value.is_u64(),
            FieldType::Float => value.is_number(),
            FieldType::Bool => value.is_boolean(),
            FieldType::List => value.is_array(),
            FieldType::Map => value.is_object(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct FieldSpec {
    #[serde(rename = "type")]
    pub field_type: FieldType,
    #[serde(default)]
    pub range: Option<(f64, f64)>,
    #[serde(default)]
    pub r#enum: Option<Vec<String>>,
    #[serde(default)]
    pub default: Option<Value>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SumRule {
    pub fields: Vec<String>,
    pub total: f64,
    pub tolerance: f64,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DependencyRule {
    pub if_field: String,
    pub equals: Value,
    pub require: String,
    pub message: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CompatibilityRule {
    pub if_present: String,
    pub unless_field: String,
    pub unless_equals: Value,
    pub message: String,
}

/// A validation schema, itself loaded from a data document.
#[derive(Debug, Clone, Deserialize)]
pub struct SchemaSpec {
    pub fields: BTreeMap<String, FieldSpec>,
    #[serde(default)]
    pub open_prefixes: Vec<String>,
    #[serde(default)]
    pub known_sections: Vec<String>,
    #[serde(default)]
    pub sums: Vec<SumRule>,
    #[serde(default)]
    pub dependencies: Vec<DependencyRule>,
    #[serde(default)]
    pub compatibility: Vec<CompatibilityRule>,
}

impl SchemaSpec {
    /// The bundled agent-configuration schema.
    pub fn builtin() -> Self {
        serde_yaml::from_str(include_str!("../data/schema.yaml"))
            .expect("bundled schema parses")
    }

    pub fn from_yaml_str(text: &str) -> Result<Self, ConfigError> {
        serde_yaml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// All violations found in a document. Empty `errors` means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<(String, String)>,
    pub warnings: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

fn leaf_paths(value: &Value, prefix: &str, out: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (key, child) in map {
                let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
                leaf_paths(child, &path, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

/// Validate a document against a schema in six phases: structure/types,
/// ranges, enums, dependencies, sums, and compatibility. Compatibility
/// issues and unknown keys are warnings; everything else is an error.
pub fn validate(doc: &ConfigDocument, schema: &SchemaSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut paths = Vec::new();
    leaf_paths(&doc.tree, "", &mut paths);
    let known_sections: BTreeSet<&str> = schema.known_sections.iter().map(String::as_str).collect();

    // Phase 1: structure and types (unknown keys warn).
    for path in &paths {
        if path.is_empty() {
            continue;
        }
        match schema.fields.get(path) {
            Some(spec) => {
                let value = doc.get(path).unwrap();
                if !value.is_null() && !spec.field_type.matches(value) {
                    report.errors.push((
                        path.clone(),
                        format!("expected {:?}", spec.field_type).to_lowercase(),
                    ));
                }
            }
            None => {
                let open = schema.open_prefixes.iter().any(|p| path == p || path.starts_with(&format!("{p}.")));
                let section = path.split('.').next().unwrap_or_default();
                if !open {
                    if !known_sections.is_empty() && !known_sections.contains(section) {
                        report.warnings.push((path.clone(), "unknown section".to_string()));
                    } else {
                        report.warnings.push((path.clone(), "unknown key".to_string()));
                    }
                }
            }
        }
    }

    // Phase 2: ranges.
    for (path, spec) in &schema.fields {
        let (Some(range), Some(value)) = (spec.range, doc.get(path)) else { continue };
        if let Some(n) = value.as_f64() {
            if n < range.0 || n > range.1 {
                report.errors.push((
                    path.clone(),
                    format!("value {n} out of range [{}, {}]", range.0, range.1),
                ));
            }
        }
    }

    // Phase 3: enums.
    for (path, spec) in &schema.fields {
        let (Some(allowed), Some(value)) = (&spec.r#enum, doc.get(path)) else { continue };
        if let Some(s) = value.as_str() {
            if !allowed.iter().any(|a| a == s) {
                report.errors.push((path.clone(), format!("`{s}` not one of {allowed:?}")));
            }
        }
    }

    // Phase 4: dependencies.
    for rule in &schema.dependencies {
        let triggered = doc.get(&rule.if_field).map(|v| *v == rule.equals).unwrap_or(false);
        if triggered && doc.get(&rule.require).map(Value::is_null).unwrap_or(true) {
            report.errors.push((rule.require.clone(), rule.message.clone()));
        }
    }

    // Phase 5: sums.
    for rule in &schema.sums {
        let present = rule.fields.iter().any(|f| doc.get(f).is_some());
        if !present {
            continue;
        }
        let sum: f64 = rule
            .fields
            .iter()
            .map(|f| {
                doc.get_f64(f).unwrap_or_else(|| {
                    schema
                        .fields
                        .get(f)
                        .and_then(|s| s.default.as_ref())
                        .and_then(Value::as_f64)
                        .unwrap_or(0.0)
                })
            })
            .sum();
        if (sum - rule.total).abs() > rule.tolerance {
            report
                .errors
                .push((rule.path.clone(), format!("{} (got {sum})", rule.message)));
        }
    }

    // Phase 6: compatibility (warnings).
    for rule in &schema.compatibility {
        if doc.get(&rule.if_present).map(|v| !v.is_null()).unwrap_or(false) {
            let exempt = doc
                .get(&rule.unless_field)
                .map(|v| *v == rule.unless_equals)
                .unwrap_or(false);
            if !exempt {
                report.warnings.push((rule.if_present.clone(), rule.message.clone()));
            }
        }
    }

    report
}

/// Inject schema defaults for absent paths. Runs after the final merge.
pub fn apply_defaults(doc: &ConfigDocument, schema: &SchemaSpec) -> ConfigDocument {
    let mut tree = doc.tree.clone();
    for (path, spec) in &schema.fields {
        if let Some(default) = &spec.default {
            if get_path(&tree, path).is_none() {
                set_path(&mut tree, path, default.clone());
            }
        }
    }
    ConfigDocument { tree, source_path: doc.source_path.clone() }
}

/// A template configuration document, used by `config generate`.
pub fn template_yaml(model_size: &str, tools: &[&str]) -> String {
    let tool_lines: String = tools.iter().map(|t| format!("  - name: {t}\n")).collect();
    format!(
        "agent:\n  name: my_agent\n  description: Describe what this agent does\n\nmodel:\n  name: ${{MODEL_NAME:local-model}}\n  backend: http\n  api_base: ${{API_BASE:http://127.0.0.1:8000}}\n  api_key: ${{API_KEY:}}\n  context_window: 4096\n  generation_config:\n    temperature: 0.0\n    max_tokens: 4096\n\ncomplexity:\n  enabled: true\n  threshold: 7.0\n  hierarchical_threshold: 8.5\n\nprompt_optimizer:\n  enabled: true\n  model_size: {model_size}\n\ntools:\n{tool_lines}\nmemory:\n  short_term:\n    max_messages: 100\n    max_tokens: 4096\n  long_term:\n    enabled: true\n    backend: jsonl\n    path: ./memories/agent.jsonl\n\nsub_agents:\n  max_depth: 2\n\nexecution:\n  max_iterations: 10\n  timeout: 300\n"
    )
}
