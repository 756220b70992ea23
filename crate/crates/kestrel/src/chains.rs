//! Prompt chains: ordered steps executed over a shared variable state with
//! `{var}` interpolation, restricted condition expressions, retries with
//! exponential backoff, and sequential / conditional / iterative / parallel
//! / hybrid strategies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::memory::Embedder;
use crate::util::Sleeper;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("undefined variable `{0}` in condition")]
    UndefinedVariable(String),
    #[error("condition syntax error: {0}")]
    Syntax(String),
    #[error("disallowed construct in condition: {0}")]
    Security(String),
    #[error("condition type error: {0}")]
    TypeError(String),
    #[error("duplicate step name `{0}`")]
    DuplicateStep(String),
    #[error("step `{step}` depends on unknown step `{dep}`")]
    UnknownDependency { step: String, dep: String },
    #[error("dependency cycle involving step `{0}`")]
    Cycle(String),
    #[error("step `{0}` is malformed: {1}")]
    BadStep(String, &'static str),
    #[error("chain strategy {0:?} cannot be run by this entry point")]
    WrongStrategy(ChainStrategy),
    #[error("failed to parse chain config: {0}")]
    Parse(String),
}

/// What a step does when it runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Prompt,
    Tool,
    Function,
    ParallelGroup,
}

/// Chain-level execution strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStrategy {
    Sequential,
    Conditional,
    Iterative,
    Parallel,
    Hybrid,
}

/// Observable step status. Steps move PENDING -> RUNNING -> one of
/// {COMPLETED, SKIPPED, FAILED}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StepStatus {
    Pending,
    Running,
    Completed,
    Skipped,
    Failed,
}

/// One chain step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainStep {
    pub name: String,
    pub kind: StepKind,
    #[serde(default)]
    pub prompt_template: Option<String>,
    #[serde(default)]
    pub tool_name: Option<String>,
    #[serde(default)]
    pub condition: Option<String>,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub dependencies: Vec<String>,
    #[serde(default)]
    pub group: Vec<ChainStep>,
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
    #[serde(default)]
    pub output_var: Option<String>,
}

fn default_timeout() -> f64 {
    60.0
}

impl ChainStep {
    pub fn prompt(name: impl Into<String>, template: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: StepKind::Prompt,
            prompt_template: Some(template.into()),
            tool_name: None,
            condition: None,
            max_retries: 0,
            timeout_secs: default_timeout(),
            dependencies: Vec::new(),
            group: Vec::new(),
            metadata: BTreeMap::new(),
            output_var: None,
        }
    }

    pub fn tool(name: impl Into<String>, tool: impl Into<String>) -> Self {
        let mut step = Self::prompt(name, "");
        step.kind = StepKind::Tool;
        step.prompt_template = None;
        step.tool_name = Some(tool.into());
        step
    }

    pub fn function(name: impl Into<String>, function: impl Into<String>) -> Self {
        let mut step = Self::prompt(name, "");
        step.kind = StepKind::Function;
        step.prompt_template = None;
        step.tool_name = Some(function.into());
        step
    }

    pub fn with_output_var(mut self, var: impl Into<String>) -> Self {
        self.output_var = Some(var.into());
        self
    }

    pub fn with_condition(mut self, condition: impl Into<String>) -> Self {
        self.condition = Some(condition.into());
        self
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.max_retries = retries;
        self
    }

    pub fn with_dependencies(mut self, deps: &[&str]) -> Self {
        self.dependencies = deps.iter().map(|d| d.to_string()).collect();
        self
    }

    fn validate(&self) -> Result<(), ChainError> {
        match self.kind {
            StepKind::Prompt if self.prompt_template.is_none() => {
                Err(ChainError::BadStep(self.name.clone(), "PROMPT step needs a prompt template"))
            }
            StepKind::Tool | StepKind::Function if self.tool_name.is_none() => {
                Err(ChainError::BadStep(self.name.clone(), "TOOL/FUNCTION step needs a name"))
            }
            StepKind::ParallelGroup if self.group.is_empty() => {
                Err(ChainError::BadStep(self.name.clone(), "PARALLEL_GROUP step needs nested steps"))
            }
            _ => Ok(()),
        }
    }
}

/// Shared chain state: variables, per-step results, statuses, and metadata
/// including the iteration counter.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChainState {
    pub variables: BTreeMap<String, Value>,
    pub results: BTreeMap<String, Value>,
    pub statuses: BTreeMap<String, StepStatus>,
    pub iteration_count: u64,
    #[serde(default)]
    pub meta: BTreeMap<String, Value>,
}

impl ChainState {
    pub fn with_var(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.variables.insert(name.into(), value.into());
        self
    }
}

/// A named chain of steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain {
    pub name: String,
    pub steps: Vec<ChainStep>,
    pub strategy: ChainStrategy,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    #[serde(default)]
    pub early_stop: Option<String>,
}

fn default_max_iterations() -> u32 {
    1
}

impl Chain {
    pub fn new(name: impl Into<String>, strategy: ChainStrategy, steps: Vec<ChainStep>) -> Self {
        Self { name: name.into(), steps, strategy, max_iterations: 1, early_stop: None }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        let mut names = BTreeSet::new();
        for step in &self.steps {
            step.validate()?;
            if !names.insert(step.name.clone()) {
                return Err(ChainError::DuplicateStep(step.name.clone()));
            }
        }
        for step in &self.steps {
            for dep in &step.dependencies {
                if !names.contains(dep) {
                    return Err(ChainError::UnknownDependency {
                        step: step.name.clone(),
                        dep: dep.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Load a chain from the YAML layout used by chain config files
    /// (`name`, `chain_type`, `steps` with `type`/`prompt`/`tool`/
    /// `output_var`/`dependencies`).
    pub fn from_yaml_str(text: &str) -> Result<Self, ChainError> {
        #[derive(Deserialize)]
        struct RawStep {
            name: String,
            #[serde(rename = "type")]
            kind: StepKind,
            #[serde(default)]
            prompt: Option<String>,
            #[serde(default)]
            tool: Option<String>,
            #[serde(default)]
            function: Option<String>,
            #[serde(default)]
            condition: Option<String>,
            #[serde(default)]
            max_retries: u32,
            #[serde(default = "default_timeout")]
            timeout: f64,
            #[serde(default)]
            dependencies: Vec<String>,
            #[serde(default)]
            metadata: BTreeMap<String, Value>,
            #[serde(default)]
            output_var: Option<String>,
        }
        #[derive(Deserialize)]
        struct RawChain {
            name: String,
            #[serde(rename = "chain_type")]
            strategy: ChainStrategy,
            #[serde(default = "default_max_iterations")]
            max_iterations: u32,
            #[serde(default)]
            early_stopping_condition: Option<String>,
            steps: Vec<RawStep>,
        }
        let raw: RawChain = serde_yaml::from_str(text).map_err(|e| ChainError::Parse(e.to_string()))?;
        let steps = raw
            .steps
            .into_iter()
            .map(|s| ChainStep {
                name: s.name,
                kind: s.kind,
                prompt_template: s.prompt,
                tool_name: s.tool.or(s.function),
                condition: s.condition,
                max_retries: s.max_retries,
                timeout_secs: s.timeout,
                dependencies: s.dependencies,
                group: Vec::new(),
                metadata: s.metadata,
                output_var: s.output_var,
            })
            .collect();
        let chain = Chain {
            name: raw.name,
            steps,
            strategy: raw.strategy,
            max_iterations: raw.max_iterations,
            early_stop: raw.early_stopping_condition,
        };
        chain.validate()?;
        Ok(chain)
    }
}

/// Render a value for interpolation: strings verbatim, numbers in their
/// shortest round-trip form, structures as canonical JSON.
fn value_to_string(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Replace `{var}` markers with state variables; `{{`/`}}` escape to literal
/// braces. Undefined variables become empty strings and produce one warning
/// each. Never fails.
pub fn interpolate(template: &str, state: &ChainState) -> (String, Vec<String>) {
    let mut out = String::with_capacity(template.len());
    let mut warnings = Vec::new();
    let chars: Vec<char> = template.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '{' if chars.get(i + 1) == Some(&'{') => {
                out.push('{');
                i += 2;
            }
            '}' if chars.get(i + 1) == Some(&'}') => {
                out.push('}');
                i += 2;
            }
            '{' => {
                let close = chars[i + 1..].iter().position(|&c| c == '}' || c == '{');
                match close {
                    Some(offset) if chars[i + 1 + offset] == '}' => {
                        let name: String = chars[i + 1..i + 1 + offset].iter().collect();
                        match state.variables.get(name.trim()) {
                            Some(value) => out.push_str(&value_to_string(value)),
                            None if name.trim() == "iteration_count" => {
                                out.push_str(&state.iteration_count.to_string());
                            }
                            None => warnings.push(format!("undefined variable `{}`", name.trim())),
                        }
                        i += offset + 2;
                    }
                    _ => {
                        out.push('{');
                        i += 1;
                    }
                }
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    (out, warnings)
}

// ---------------------------------------------------------------------------
// Restricted condition expressions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Str(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

fn tokenize(expr: &str) -> Result<Vec<Token>, ChainError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = expr.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).map(|n| n.is_ascii_digit()).unwrap_or(false)) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let lit: String = chars[start..i].iter().collect();
            let n = lit.parse::<f64>().map_err(|_| ChainError::Syntax(format!("bad number `{lit}`")))?;
            tokens.push(Token::Number(n));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(Token::Ident(chars[start..i].iter().collect()));
        } else if c == '\'' || c == '"' {
            let quote = c;
            i += 1;
            let start = i;
            while i < chars.len() && chars[i] != quote {
                i += 1;
            }
            if i >= chars.len() {
                return Err(ChainError::Syntax("unterminated string".to_string()));
            }
            tokens.push(Token::Str(chars[start..i].iter().collect()));
            i += 1;
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let op = match two.as_str() {
                "==" | "!=" | "<=" | ">=" => Some(match two.as_str() {
                    "==" => "==",
                    "!=" => "!=",
                    "<=" => "<=",
                    _ => ">=",
                }),
                _ => None,
            };
            if let Some(op) = op {
                tokens.push(Token::Op(op));
                i += 2;
            } else {
                match c {
                    '<' => tokens.push(Token::Op("<")),
                    '>' => tokens.push(Token::Op(">")),
                    '(' => tokens.push(Token::LParen),
                    ')' => tokens.push(Token::RParen),
                    ',' => tokens.push(Token::Comma),
                    '=' => return Err(ChainError::Security("assignment is not allowed".to_string())),
                    '.' => return Err(ChainError::Security("attribute access is not allowed".to_string())),
                    other => {
                        return Err(ChainError::Security(format!("character `{other}` is not allowed")))
                    }
                }
                i += 1;
            }
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, PartialEq)]
enum CondValue {
    Num(f64),
    Str(String),
    Bool(bool),
}

const ALLOWED_FUNCTIONS: [&str; 4] = ["len", "str", "int", "float"];

struct CondParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    state: &'a ChainState,
}

impl<'a> CondParser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn parse_or(&mut self) -> Result<CondValue, ChainError> {
        let mut left = self.parse_and()?;
        while matches!(self.peek(), Some(Token::Ident(w)) if w == "or") {
            self.next();
            let right = self.parse_and()?;
            left = CondValue::Bool(as_bool(&left)? || as_bool(&right)?);
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<CondValue, ChainError> {
        let mut left = self.parse_not()?;
        while matches!(self.peek(), Some(Token::Ident(w)) if w == "and") {
            self.next();
            let right = self.parse_not()?;
            left = CondValue::Bool(as_bool(&left)? && as_bool(&right)?);
        }
        Ok(left)
    }

    fn parse_not(&mut self) -> Result<CondValue, ChainError> {
        if matches!(self.peek(), Some(Token::Ident(w)) if w == "not") {
            self.next();
            let inner = self.parse_not()?;
            return Ok(CondValue::Bool(!as_bool(&inner)?));
        }
        self.parse_comparison()
    }

    fn parse_comparison(&mut self) -> Result<CondValue, ChainError> {
        let left = self.parse_operand()?;
        let op = match self.peek() {
            Some(Token::Op(op)) => *op,
            _ => return Ok(left),
        };
        self.next();
        let right = self.parse_operand()?;
        if matches!(self.peek(), Some(Token::Op(_))) {
            return Err(ChainError::Syntax("chained comparisons are not supported".to_string()));
        }
        compare(&left, op, &right)
    }

    fn parse_operand(&mut self) -> Result<CondValue, ChainError> {
        match self.next() {
            Some(Token::Number(n)) => Ok(CondValue::Num(n)),
            Some(Token::Str(s)) => Ok(CondValue::Str(s)),
            Some(Token::LParen) => {
                let inner = self.parse_or()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(ChainError::Syntax("expected `)`".to_string())),
                }
            }
            Some(Token::Ident(name)) => {
                if name == "true" {
                    return Ok(CondValue::Bool(true));
                }
                if name == "false" {
                    return Ok(CondValue::Bool(false));
                }
                if matches!(self.peek(), Some(Token::LParen)) {
                    if !ALLOWED_FUNCTIONS.contains(&name.as_str()) {
                        return Err(ChainError::Security(format!("function `{name}` is not callable")));
                    }
                    self.next();
                    let arg = self.parse_or()?;
                    match self.next() {
                        Some(Token::RParen) => {}
                        _ => return Err(ChainError::Syntax("expected `)` after call".to_string())),
                    }
                    return apply_function(&name, arg);
                }
                self.lookup(&name)
            }
            other => Err(ChainError::Syntax(format!("unexpected token {other:?}"))),
        }
    }

    fn lookup(&self, name: &str) -> Result<CondValue, ChainError> {
        if name == "iteration_count" {
            return Ok(CondValue::Num(self.state.iteration_count as f64));
        }
        match self.state.variables.get(name) {
            Some(Value::Number(n)) => Ok(CondValue::Num(n.as_f64().unwrap_or(f64::NAN))),
            Some(Value::String(s)) => Ok(CondValue::Str(s.clone())),
            Some(Value::Bool(b)) => Ok(CondValue::Bool(*b)),
            Some(other) => Err(ChainError::TypeError(format!(
                "variable `{name}` has non-scalar type; use len() ({other})"
            ))),
            None => Err(ChainError::UndefinedVariable(name.to_string())),
        }
    }
}

fn as_bool(v: &CondValue) -> Result<bool, ChainError> {
    match v {
        CondValue::Bool(b) => Ok(*b),
        other => Err(ChainError::TypeError(format!("expected boolean, got {other:?}"))),
    }
}

fn apply_function(name: &str, arg: CondValue) -> Result<CondValue, ChainError> {
    match name {
        "len" => match arg {
            CondValue::Str(s) => Ok(CondValue::Num(s.chars().count() as f64)),
            other => Err(ChainError::TypeError(format!("len() expects a string, got {other:?}"))),
        },
        "str" => Ok(CondValue::Str(match arg {
            CondValue::Str(s) => s,
            CondValue::Num(n) => crate::chains::format_number(n),
            CondValue::Bool(b) => b.to_string(),
        })),
        "int" => match arg {
            CondValue::Num(n) => Ok(CondValue::Num(n.trunc())),
            CondValue::Str(s) => s
                .trim()
                .parse::<f64>()
                .map(|n| CondValue::Num(n.trunc()))
                .map_err(|_| ChainError::TypeError(format!("int() cannot parse `{s}`"))),
            CondValue::Bool(b) => Ok(CondValue::Num(if b { 1.0 } else { 0.0 })),
        },
        "float" => match arg {
            CondValue::Num(n) => Ok(CondValue::Num(n)),
            CondValue::Str(s) => s
                .trim()
                .parse::<f64>()
                .map(CondValue::Num)
                .map_err(|_| ChainError::TypeError(format!("float() cannot parse `{s}`"))),
            CondValue::Bool(b) => Ok(CondValue::Num(if b { 1.0 } else { 0.0 })),
        },
        _ => unreachable!("gated by ALLOWED_FUNCTIONS"),
    }
}

fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

fn compare(left: &CondValue, op: &str, right: &CondValue) -> Result<CondValue, ChainError> {
    use CondValue::*;
    let result = match (left, right) {
        (Num(a), Num(b)) => match op {
            "==" => a == b,
            "!=" => a != b,
            "<" => a < b,
            "<=" => a <= b,
            ">" => a > b,
            ">=" => a >= b,
            _ => unreachable!(),
        },
        (Str(a), Str(b)) => match op {
            "==" => a == b,
            "!=" => a != b,
            "<" => a < b,
            "<=" => a <= b,
            ">" => a > b,
            ">=" => a >= b,
            _ => unreachable!(),
        },
        (Bool(a), Bool(b)) if op == "==" || op == "!=" => {
            if op == "==" {
                a == b
            } else {
                a != b
            }
        }
        _ => {
            return Err(ChainError::TypeError(format!(
                "cannot compare {left:?} {op} {right:?}"
            )))
        }
    };
    Ok(Bool(result))
}

/// Evaluate a restricted boolean expression over the chain variables plus
/// `iteration_count`. Supports comparisons, and/or/not, numeric and string
/// literals, and the helpers len/str/int/float; nothing else is callable.
pub fn evaluate_condition(expr: &str, state: &ChainState) -> Result<bool, ChainError> {
    let tokens = tokenize(expr)?;
    if tokens.is_empty() {
        return Err(ChainError::Syntax("empty condition".to_string()));
    }
    let mut parser = CondParser { tokens: &tokens, pos: 0, state };
    let value = parser.parse_or()?;
    if parser.pos != tokens.len() {
        return Err(ChainError::Syntax("trailing tokens in condition".to_string()));
    }
    as_bool(&value)
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Supplies the actual work behind each step kind. Implementations must be
/// safe to call from several threads at once; parallel strategies fan out.
pub trait StepRunner: Sync {
    fn run_prompt(&self, prompt: &str, step: &ChainStep) -> Result<Value, String>;
    fn run_tool(&self, tool: &str, step: &ChainStep, state: &ChainState) -> Result<Value, String>;
    fn run_function(&self, name: &str, state: &ChainState) -> Result<Value, String>;
}

/// Drives chains against a [`StepRunner`].
pub struct ChainExecutor<'a> {
    pub runner: &'a dyn StepRunner,
    pub sleeper: &'a dyn Sleeper,
    /// Stop a sequential run at the first FAILED step.
    pub fail_fast: bool,
}

enum StepOutcome {
    Completed(Value),
    Skipped,
    Failed(String),
}

impl ChainExecutor<'_> {
    pub fn new<'a>(runner: &'a dyn StepRunner, sleeper: &'a dyn Sleeper) -> ChainExecutor<'a> {
        ChainExecutor { runner, sleeper, fail_fast: false }
    }

    /// Dispatch on the chain's strategy.
    pub fn run(&self, chain: &Chain, state: ChainState) -> Result<ChainState, ChainError> {
        chain.validate()?;
        match chain.strategy {
            ChainStrategy::Sequential | ChainStrategy::Conditional => {
                self.run_sequential(chain, state)
            }
            ChainStrategy::Parallel => self.run_parallel(chain, state),
            ChainStrategy::Iterative => self.run_iterative(chain, state),
            ChainStrategy::Hybrid => self.run_hybrid(chain, state),
        }
    }

    fn attempt_step(&self, step: &ChainStep, state: &ChainState) -> StepOutcome {
        if let Some(cond) = &step.condition {
            match evaluate_condition(cond, state) {
                Ok(true) => {}
                Ok(false) => return StepOutcome::Skipped,
                Err(e) => return StepOutcome::Failed(format!("condition error: {e}")),
            }
        }
        let mut last_error = String::new();
        for attempt in 0..=step.max_retries {
            let result = match step.kind {
                StepKind::Prompt => {
                    let template = step.prompt_template.as_deref().unwrap_or_default();
                    let (prompt, _warnings) = interpolate(template, state);
                    self.runner.run_prompt(&prompt, step)
                }
                StepKind::Tool => {
                    let tool = step.tool_name.as_deref().unwrap_or_default();
                    self.runner.run_tool(tool, step, state)
                }
                StepKind::Function => {
                    let name = step.tool_name.as_deref().unwrap_or_default();
                    self.runner.run_function(name, state)
                }
                StepKind::ParallelGroup => self.run_group(step, state),
            };
            match result {
                Ok(value) => return StepOutcome::Completed(value),
                Err(e) => {
                    last_error = e;
                    if attempt < step.max_retries {
                        self.sleeper.sleep(0.1 * 2f64.powi(attempt as i32 + 1));
                    }
                }
            }
        }
        StepOutcome::Failed(last_error)
    }

    /// Nested parallel group inside a sequential chain: run the group's
    /// steps concurrently and return their results keyed by step name.
    fn run_group(&self, group: &ChainStep, state: &ChainState) -> Result<Value, String> {
        let outcomes = self.fan_out(&group.group, state);
        let mut merged = serde_json::Map::new();
        let mut failures = Vec::new();
        for (step, outcome) in group.group.iter().zip(outcomes) {
            match outcome {
                StepOutcome::Completed(v) => {
                    merged.insert(step.name.clone(), v);
                }
                StepOutcome::Skipped => {}
                StepOutcome::Failed(e) => failures.push(format!("{}: {e}", step.name)),
            }
        }
        if failures.is_empty() {
            Ok(Value::Object(merged))
        } else {
            Err(failures.join("; "))
        }
    }

    fn fan_out(&self, steps: &[ChainStep], state: &ChainState) -> Vec<StepOutcome> {
        std::thread::scope(|scope| {
            let handles: Vec<_> = steps
                .iter()
                .map(|step| scope.spawn(move || self.attempt_step(step, state)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("step thread panicked")).collect()
        })
    }

    fn record(&self, state: &mut ChainState, step: &ChainStep, outcome: StepOutcome) -> StepStatus {
        match outcome {
            StepOutcome::Completed(value) => {
                state.results.insert(step.name.clone(), value.clone());
                if let Some(var) = &step.output_var {
                    state.variables.insert(var.clone(), value);
                }
                state.statuses.insert(step.name.clone(), StepStatus::Completed);
                StepStatus::Completed
            }
            StepOutcome::Skipped => {
                state.statuses.insert(step.name.clone(), StepStatus::Skipped);
                StepStatus::Skipped
            }
            StepOutcome::Failed(error) => {
                state.statuses.insert(step.name.clone(), StepStatus::Failed);
                state.meta.insert(format!("error:{}", step.name), Value::String(error));
                StepStatus::Failed
            }
        }
    }

    /// Steps in order; condition-false steps SKIPPED; failures retried with
    /// 0.2s/0.4s/0.8s... backoff; the early-stop expression is checked
    /// before each step.
    pub fn run_sequential(&self, chain: &Chain, mut state: ChainState) -> Result<ChainState, ChainError> {
        for step in &chain.steps {
            state.statuses.entry(step.name.clone()).or_insert(StepStatus::Pending);
        }
        for step in &chain.steps {
            if let Some(stop) = &chain.early_stop {
                if evaluate_condition(stop, &state).unwrap_or(false) {
                    break;
                }
            }
            state.statuses.insert(step.name.clone(), StepStatus::Running);
            let outcome = self.attempt_step(step, &state);
            let status = self.record(&mut state, step, outcome);
            if status == StepStatus::Failed && self.fail_fast {
                break;
            }
        }
        Ok(state)
    }

    /// All condition-true steps launched concurrently against the initial
    /// state; failures never cancel siblings; results merge in step order.
    pub fn run_parallel(&self, chain: &Chain, mut state: ChainState) -> Result<ChainState, ChainError> {
        for step in &chain.steps {
            state.statuses.insert(step.name.clone(), StepStatus::Running);
        }
        let outcomes = self.fan_out(&chain.steps, &state);
        for (step, outcome) in chain.steps.iter().zip(outcomes) {
            self.record(&mut state, step, outcome);
        }
        Ok(state)
    }

    /// Repeat the full step sequence; `iteration_count` is visible as `k`
    /// during pass `k` and incremented after it; the termination expression
    /// is evaluated after each pass.
    pub fn run_iterative(&self, chain: &Chain, mut state: ChainState) -> Result<ChainState, ChainError> {
        let passes = chain.max_iterations.max(1);
        for _ in 0..passes {
            let inner = Chain {
                name: chain.name.clone(),
                steps: chain.steps.clone(),
                strategy: ChainStrategy::Sequential,
                max_iterations: 1,
                early_stop: None,
            };
            state = self.run_sequential(&inner, state)?;
            state.iteration_count += 1;
            if let Some(stop) = &chain.early_stop {
                if evaluate_condition(stop, &state).unwrap_or(false) {
                    break;
                }
            }
        }
        Ok(state)
    }

    /// Group steps by dependency level: levels run in order, steps within a
    /// level run concurrently and see every earlier level's outputs.
    pub fn run_hybrid(&self, chain: &Chain, mut state: ChainState) -> Result<ChainState, ChainError> {
        let levels = Self::topological_levels(&chain.steps)?;
        for step in &chain.steps {
            state.statuses.entry(step.name.clone()).or_insert(StepStatus::Pending);
        }
        for level in levels {
            let steps: Vec<&ChainStep> = chain
                .steps
                .iter()
                .filter(|s| level.contains(&s.name))
                .collect();
            for step in &steps {
                state.statuses.insert(step.name.clone(), StepStatus::Running);
            }
            let outcomes = std::thread::scope(|scope| {
                let state_ref = &state;
                let handles: Vec<_> = steps
                    .iter()
                    .map(|step| scope.spawn(move || self.attempt_step(step, state_ref)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("step thread panicked"))
                    .collect::<Vec<_>>()
            });
            for (step, outcome) in steps.iter().zip(outcomes) {
                self.record(&mut state, step, outcome);
            }
        }
        Ok(state)
    }

    fn topological_levels(steps: &[ChainStep]) -> Result<Vec<BTreeSet<String>>, ChainError> {
        let names: Vec<String> = steps.iter().map(|s| s.name.clone()).collect();
        let deps: BTreeMap<String, BTreeSet<String>> = steps
            .iter()
            .map(|s| (s.name.clone(), s.dependencies.iter().cloned().collect()))
            .collect();
        let mut placed: BTreeSet<String> = BTreeSet::new();
        let mut levels = Vec::new();
        while placed.len() < names.len() {
            let ready: BTreeSet<String> = names
                .iter()
                .filter(|n| !placed.contains(*n))
                .filter(|n| deps[*n].iter().all(|d| placed.contains(d)))
                .cloned()
                .collect();
            if ready.is_empty() {
                let stuck = names.iter().find(|n| !placed.contains(*n)).unwrap().clone();
                return Err(ChainError::Cycle(stuck));
            }
            placed.extend(ready.iter().cloned());
            levels.push(ready);
        }
        Ok(levels)
    }
}

/// Pick the `k` examples whose inputs are most similar to the query under
/// the embedder's cosine similarity; ties keep the original order.
pub fn select_few_shot<'a>(
    examples: &'a [(String, String)],
    query: &str,
    k: usize,
    embedder: &dyn Embedder,
) -> Vec<&'a (String, String)> {
    let query_embedding = embedder.embed(query);
    let mut scored: Vec<(usize, f32)> = examples
        .iter()
        .enumerate()
        .map(|(i, (input, _))| {
            (i, crate::memory::cosine(&query_embedding, &embedder.embed(input)))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(i, _)| &examples[i]).collect()
}
