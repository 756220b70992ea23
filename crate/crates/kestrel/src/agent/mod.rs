//! The agent itself: score the query, optimize the prompt, then either run
//! the ReAct loop directly or decompose into sub-agents, execute the
//! subtask graph, and synthesize the results — recording every event into
//! an execution tree and updating memory on the way out.

mod backend;
mod react;

pub use backend::{
    shared, BackendError, CompletionBackend, GenerationParams, HttpBackend, PromptMatcher,
    ScriptedBackend,
};
pub use react::{build_react_prompt, ReactError, ToolCallRecord};

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::complexity::{ComplexityAnalyzer, FactorWeights, RoutingThresholds, Strategy};
use crate::config::{apply_defaults, validate, ConfigDocument, SchemaSpec, ValidationReport};
use crate::decompose::{
    parse_decomposition, render_decomposition_prompt, select_strategy, topological_levels,
    Specialization, Subtask, SubtaskGraph,
};
use crate::memory::{estimate_tokens, MemorySystem, Role, ShortTermConfig};
use crate::promptopt::{OptimizerProfile, PromptOptimizer, SizeClass};
use crate::tools::ToolRegistry;
use crate::tracking::{EventType, ExecutionTree, NodeStatus, SharedTree};
use crate::util::{Clock, Sleeper, SystemClock, ThreadSleeper};

use react::{meta, react_loop, ReactContext, ReactOutcome};

static AGENT_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("configuration failed validation: {0:?}")]
    InvalidConfig(ValidationReport),
    #[error("run exceeded its {timeout}s timeout")]
    Timeout { timeout: f64, tree: Box<ExecutionTree> },
    #[error(transparent)]
    React(#[from] ReactError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no completion backend configured; set model.api_base or supply one programmatically")]
    NoBackend,
}

/// Agent tuning, usually read from a config document.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub name: String,
    pub thresholds: RoutingThresholds,
    pub weights: FactorWeights,
    pub optimizer_profile: OptimizerProfile,
    pub max_iterations: u32,
    pub timeout: f64,
    pub max_depth: u32,
    pub inherit_tools: bool,
    pub inherit_memory: bool,
    pub generation: GenerationParams,
    pub short_term: ShortTermConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            name: "agent".to_string(),
            thresholds: RoutingThresholds::default(),
            weights: FactorWeights::default(),
            optimizer_profile: OptimizerProfile::for_size(SizeClass::Medium),
            max_iterations: 10,
            timeout: 300.0,
            max_depth: 2,
            inherit_tools: true,
            inherit_memory: false,
            generation: GenerationParams::default(),
            short_term: ShortTermConfig::default(),
        }
    }
}

impl AgentConfig {
    /// Extract agent tuning from a validated document (defaults applied).
    pub fn from_document(doc: &ConfigDocument) -> Self {
        let doc = apply_defaults(doc, &SchemaSpec::builtin());
        let mut config = AgentConfig {
            name: doc.get_str("agent.name").unwrap_or("agent").to_string(),
            ..AgentConfig::default()
        };
        if let Some(tau) = doc.get_f64("complexity.threshold") {
            config.thresholds.tau = tau;
        }
        if let Some(tau_h) = doc.get_f64("complexity.hierarchical_threshold") {
            config.thresholds.tau_h = tau_h;
        }
        if let Some(weights) = doc.get("complexity.weights") {
            let pick = |k: &str, d: f64| weights.get(k).and_then(Value::as_f64).unwrap_or(d);
            config.weights = FactorWeights {
                task_length: pick("task_length", 0.15),
                requirement_count: pick("requirement_count", 0.25),
                domain_breadth: pick("domain_breadth", 0.20),
                tool_requirements: pick("tool_requirements", 0.20),
                reasoning_depth: pick("reasoning_depth", 0.20),
            };
        }
        let size = match doc.get_str("prompt_optimizer.model_size") {
            Some("tiny") => SizeClass::Tiny,
            Some("small") => SizeClass::Small,
            Some("large") => SizeClass::Large,
            Some("xl") => SizeClass::Xl,
            _ => SizeClass::Medium,
        };
        config.optimizer_profile = OptimizerProfile::for_size(size);
        if let Some(v) = doc.get_u64("prompt_optimizer.max_prompt_tokens") {
            config.optimizer_profile.max_prompt_tokens = v as usize;
        }
        if let Some(v) = doc.get_bool("prompt_optimizer.enable_compression") {
            config.optimizer_profile.enable_compression = v;
        }
        if let Some(v) = doc.get_bool("prompt_optimizer.enable_simplification") {
            config.optimizer_profile.enable_simplification = v;
        }
        if let Some(v) = doc.get_bool("prompt_optimizer.enable_redundancy_removal") {
            config.optimizer_profile.enable_redundancy = v;
        }
        if let Some(v) = doc.get_bool("prompt_optimizer.enable_bullet_formatting") {
            config.optimizer_profile.enable_bullets = v;
        }
        if let Some(v) = doc.get_u64("execution.max_iterations") {
            config.max_iterations = v as u32;
        }
        if let Some(v) = doc.get_f64("execution.timeout") {
            config.timeout = v;
        }
        if let Some(v) = doc.get_u64("sub_agents.max_depth") {
            config.max_depth = v as u32;
        }
        if let Some(v) = doc.get_bool("sub_agents.inherit_tools") {
            config.inherit_tools = v;
        }
        if let Some(v) = doc.get_bool("sub_agents.inherit_memory") {
            config.inherit_memory = v;
        }
        if let Some(v) = doc.get_f64("model.generation_config.temperature") {
            config.generation.temperature = v;
        }
        if let Some(v) = doc.get_u64("model.generation_config.max_tokens") {
            config.generation.max_tokens = v as u32;
        }
        if let Some(v) = doc.get_u64("memory.short_term.max_messages") {
            config.short_term.max_messages = v as usize;
        }
        if let Some(v) = doc.get_u64("memory.short_term.max_tokens") {
            config.short_term.max_tokens = v as usize;
        }
        if let Some(v) = doc.get_f64("memory.short_term.summarization_threshold") {
            config.short_term.summarization_threshold = v;
        }
        if let Some(v) = doc.get_u64("memory.short_term.preserve_recent_count") {
            config.short_term.keep_recent = v as usize;
        }
        if let Some(v) = doc.get_u64("model.context_window") {
            config.short_term.context_window = v as usize;
        }
        config
    }
}

/// Accumulated run statistics, preserved across hot reloads.
#[derive(Debug, Default, Clone)]
pub struct AgentStats {
    pub runs: u64,
    pub total_tokens: u64,
    pub tool_calls: u64,
}

/// The agent's answer plus everything observable about how it was produced.
#[derive(Debug)]
pub struct AgentResponse {
    pub content: String,
    pub tool_calls: Vec<ToolCallRecord>,
    pub tokens: u64,
    pub metadata: Map<String, Value>,
    /// The Thought/Action/Observation transcript (single-agent runs).
    pub trace: String,
    pub tree: ExecutionTree,
}

/// An agent: completion backend, tools, router, decomposer, memory, and
/// prompt optimizer, with sub-agent spawning up to a depth limit.
pub struct Agent {
    pub id: String,
    backend: Arc<dyn CompletionBackend>,
    tools: Arc<ToolRegistry>,
    analyzer: ComplexityAnalyzer,
    optimizer: PromptOptimizer,
    memory: Arc<Mutex<MemorySystem>>,
    config: AgentConfig,
    clock: Arc<dyn Clock>,
    sleeper: Arc<dyn Sleeper>,
    depth: u32,
    parent_id: Option<String>,
    stats: Arc<Mutex<AgentStats>>,
}

pub struct AgentBuilder {
    backend: Arc<dyn CompletionBackend>,
    tools: Option<Arc<ToolRegistry>>,
    config: AgentConfig,
    clock: Arc<dyn Clock>,
    sleeper: Arc<dyn Sleeper>,
    memory: Option<Arc<Mutex<MemorySystem>>>,
}

impl AgentBuilder {
    pub fn with_tools(mut self, tools: Arc<ToolRegistry>) -> Self {
        self.tools = Some(tools);
        self
    }

    pub fn with_config(mut self, config: AgentConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_memory(mut self, memory: Arc<Mutex<MemorySystem>>) -> Self {
        self.memory = Some(memory);
        self
    }

    pub fn build(self) -> Agent {
        let short_term = self.config.short_term.clone();
        Agent {
            id: format!("agent-{}", AGENT_COUNTER.fetch_add(1, Ordering::Relaxed) + 1),
            backend: self.backend,
            tools: self.tools.unwrap_or_else(|| Arc::new(ToolRegistry::with_builtins(vec![]))),
            analyzer: ComplexityAnalyzer {
                weights: self.config.weights,
                tables: crate::complexity::KeywordTables::builtin(),
            },
            optimizer: PromptOptimizer::new(self.config.optimizer_profile.clone()),
            memory: self
                .memory
                .unwrap_or_else(|| Arc::new(Mutex::new(MemorySystem::new(short_term)))),
            config: self.config,
            clock: self.clock,
            sleeper: self.sleeper,
            depth: 0,
            parent_id: None,
            stats: Arc::new(Mutex::new(AgentStats::default())),
        }
    }
}

impl Agent {
    pub fn builder(backend: Arc<dyn CompletionBackend>) -> AgentBuilder {
        AgentBuilder {
            backend,
            tools: None,
            config: AgentConfig::default(),
            clock: Arc::new(SystemClock),
            sleeper: Arc::new(ThreadSleeper),
            memory: None,
        }
    }

    /// Build from a config document: validate, apply defaults, extract
    /// tuning. Refuses documents with validation errors.
    pub fn from_document(
        doc: &ConfigDocument,
        backend: Arc<dyn CompletionBackend>,
        tools: Arc<ToolRegistry>,
    ) -> Result<Agent, AgentError> {
        let schema = SchemaSpec::builtin();
        let report = validate(doc, &schema);
        if !report.is_valid() {
            return Err(AgentError::InvalidConfig(report));
        }
        Ok(Agent::builder(backend)
            .with_tools(tools)
            .with_config(AgentConfig::from_document(doc))
            .build())
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn memory(&self) -> Arc<Mutex<MemorySystem>> {
        self.memory.clone()
    }

    pub fn tools(&self) -> Arc<ToolRegistry> {
        self.tools.clone()
    }

    pub fn stats(&self) -> AgentStats {
        self.stats.lock().unwrap().clone()
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Swap in a new configuration without losing state: memory, session
    /// history, and statistics survive; thresholds, generation parameters,
    /// optimizer settings, and the tool set are replaced. The model handle
    /// is swapped only when the configured model name changes and a new
    /// backend is supplied. Invalid documents are refused with the old
    /// agent untouched.
    pub fn hot_reload(
        &self,
        doc: &ConfigDocument,
        new_backend: Option<Arc<dyn CompletionBackend>>,
    ) -> Result<Agent, AgentError> {
        let schema = SchemaSpec::builtin();
        let report = validate(doc, &schema);
        if !report.is_valid() {
            return Err(AgentError::InvalidConfig(report));
        }
        let config = AgentConfig::from_document(doc);
        let model_changed = doc
            .get_str("model.name")
            .map(|n| n != self.backend.name())
            .unwrap_or(false);
        let backend = match (model_changed, new_backend) {
            (true, Some(b)) => b,
            _ => self.backend.clone(),
        };
        // Tool set follows the document; instances are reused from the
        // current registry by name.
        let tools = match doc.get("tools").and_then(Value::as_array) {
            Some(list) => {
                let registry = ToolRegistry::new();
                for item in list {
                    if let Some(name) = item.get("name").and_then(Value::as_str) {
                        if let Some(tool) = self.tools.get(name) {
                            let _ = registry.register(tool);
                        }
                    }
                }
                Arc::new(registry)
            }
            None => self.tools.clone(),
        };
        Ok(Agent {
            id: self.id.clone(),
            backend,
            tools,
            analyzer: ComplexityAnalyzer {
                weights: config.weights,
                tables: self.analyzer.tables.clone(),
            },
            optimizer: PromptOptimizer::new(config.optimizer_profile.clone()),
            memory: self.memory.clone(),
            config,
            clock: self.clock.clone(),
            sleeper: self.sleeper.clone(),
            depth: self.depth,
            parent_id: self.parent_id.clone(),
            stats: self.stats.clone(),
        })
    }

    /// Execute one query end to end. Complexity analysis always runs first
    /// and never touches the model; memory is updated with the query and
    /// answer on every path; the returned tree is closed and consistent.
    pub fn run(&self, query: &str, session_id: Option<&str>) -> Result<AgentResponse, AgentError> {
        let started = self.clock.now();
        let deadline = started + self.config.timeout;
        let tree = SharedTree::start(
            EventType::TaskStart,
            meta(&[
                ("task_description", json!(query)),
                ("agent_id", json!(self.id)),
                ("session_id", json!(session_id)),
            ]),
            started,
        );
        let root = tree.root_id();

        // Pre-execution analysis: pure, no model call.
        let profile = self.analyzer.analyze(query);
        let optimized = self.optimizer.optimize(query);

        let mut metadata = Map::new();
        metadata.insert("complexity_score".into(), json!(profile.score));
        metadata.insert("prompt_tokens_original".into(), json!(optimized.original_est_tokens));
        metadata.insert("prompt_tokens_optimized".into(), json!(optimized.optimized_est_tokens));

        let outcome = if profile.score < self.config.thresholds.tau {
            tree.record_instant(
                &root,
                EventType::RoutingDecision,
                meta(&[
                    ("complexity_score", json!(profile.score)),
                    ("strategy", json!(Strategy::Single.to_string())),
                ]),
                self.clock.now(),
            )
            .ok();
            metadata.insert("routing_strategy".into(), json!(Strategy::Single.to_string()));
            self.run_single(&optimized.text, &tree, &root, deadline, &mut metadata)
        } else {
            self.run_decomposed(query, &optimized.text, &profile.score, &tree, &root, deadline, &mut metadata)
        };

        let (content, tool_calls, trace) = match outcome {
            Ok(pair) => pair,
            Err(AgentError::React(ReactError::Timeout { .. })) | Err(AgentError::Timeout { .. }) => {
                tree.record_instant(
                    &root,
                    EventType::TaskFailed,
                    meta(&[("failure_reason", json!("timeout"))]),
                    self.clock.now(),
                )
                .ok();
                tree.close_all_open(NodeStatus::Failed, self.clock.now());
                return Err(AgentError::Timeout {
                    timeout: self.config.timeout,
                    tree: Box::new(tree.snapshot()),
                });
            }
            Err(other) => {
                tree.close_all_open(NodeStatus::Failed, self.clock.now());
                return Err(other);
            }
        };

        // Memory update happens on every successful path.
        {
            let mut memory = self.memory.lock().unwrap();
            let now = self.clock.now();
            memory.observe(Role::User, query, now);
            if let Some(trigger) = memory.observe(Role::Assistant, &content, now) {
                let transcript: String = trigger
                    .messages
                    .iter()
                    .map(|m| format!("{:?}: {}\n", m.role, m.content))
                    .collect();
                let prompt = format!("Summarize this conversation:\n{transcript}");
                if let Ok(summary) = self.backend.generate(&prompt, &self.config.generation) {
                    memory.short_term.apply_summary(&trigger, &summary, now);
                    tree.record_instant(&root, EventType::SummarizationTrigger, Map::new(), now).ok();
                }
            }
        }

        let finished = self.clock.now();
        tree.record_instant(
            &root,
            EventType::TaskComplete,
            meta(&[("token_count", json!(estimate_tokens(&content)))]),
            finished,
        )
        .ok();
        tree.close(&root, NodeStatus::Completed, finished).ok();
        let tree = tree.snapshot();

        metadata.insert("execution_time".into(), json!(finished - started));
        metadata.insert("tree_depth".into(), json!(tree_depth(&tree)));
        let tokens = (estimate_tokens(query) + estimate_tokens(&content)) as u64;
        {
            let mut stats = self.stats.lock().unwrap();
            stats.runs += 1;
            stats.total_tokens += tokens;
            stats.tool_calls += tool_calls.len() as u64;
        }
        Ok(AgentResponse { content, tool_calls, tokens, metadata, trace, tree })
    }

    fn react(
        &self,
        task: &str,
        tree: &SharedTree,
        parent_node: &str,
        deadline: f64,
    ) -> Result<ReactOutcome, ReactError> {
        let ctx = ReactContext {
            agent_name: &self.config.name,
            backend: self.backend.as_ref(),
            tools: self.tools.as_ref(),
            params: &self.config.generation,
            clock: self.clock.as_ref(),
            sleeper: self.sleeper.as_ref(),
            tree,
            parent_node,
            deadline,
            max_iterations: self.config.max_iterations,
        };
        react_loop(&ctx, task)
    }

    fn run_single(
        &self,
        task: &str,
        tree: &SharedTree,
        root: &str,
        deadline: f64,
        metadata: &mut Map<String, Value>,
    ) -> Result<(String, Vec<ToolCallRecord>, String), AgentError> {
        let outcome = self.react(task, tree, root, deadline)?;
        metadata.insert("iterations".into(), json!(outcome.iterations));
        Ok((outcome.answer, outcome.tool_calls, outcome.trace))
    }

    #[allow(clippy::too_many_arguments)]
    fn run_decomposed(
        &self,
        query: &str,
        optimized_task: &str,
        score: &f64,
        tree: &SharedTree,
        root: &str,
        deadline: f64,
        metadata: &mut Map<String, Value>,
    ) -> Result<(String, Vec<ToolCallRecord>, String), AgentError> {
        let template_strategy = if *score >= self.config.thresholds.tau_h {
            Strategy::Hierarchical
        } else {
            Strategy::Hybrid
        };

        // Decompose via the model, retrying the prompt once on a parse
        // failure before falling back to single-agent execution.
        let graph = match self.decompose_with_retry(query, template_strategy, tree, root) {
            Ok(graph) => graph,
            Err(_) => {
                tree.record_instant(
                    root,
                    EventType::RoutingDecision,
                    meta(&[
                        ("strategy", json!(Strategy::Single.to_string())),
                        ("reasoning", json!("decomposition failed; single-agent fallback")),
                    ]),
                    self.clock.now(),
                )
                .ok();
                metadata.insert("routing_strategy".into(), json!(Strategy::Single.to_string()));
                metadata.insert("fallback".into(), json!(true));
                return self.run_single(optimized_task, tree, root, deadline, metadata);
            }
        };

        let strategy = select_strategy(*score, &self.config.thresholds, graph.dependency_summary());
        tree.record_instant(
            root,
            EventType::RoutingDecision,
            meta(&[
                ("complexity_score", json!(score)),
                ("strategy", json!(strategy.to_string())),
            ]),
            self.clock.now(),
        )
        .ok();
        metadata.insert("routing_strategy".into(), json!(strategy.to_string()));
        metadata.insert("num_subtasks".into(), json!(graph.subtasks.len()));

        if self.depth >= self.config.max_depth {
            // Out of spawning budget: execute the whole task locally.
            metadata.insert("local_execution".into(), json!(true));
            return self.run_single(optimized_task, tree, root, deadline, metadata);
        }

        let agents = self.spawn_sub_agents(&graph, tree, root);
        let results = self.execute_graph(&agents, &graph, tree, root, deadline);
        let manager_desc = graph.manager.as_ref().map(|m| m.description.clone());
        let (content, warning) =
            self.synthesize_results(&results, query, manager_desc.as_deref(), tree, root, &graph);
        if warning {
            metadata.insert("synthesis_warning".into(), json!(true));
        }
        let failed: Vec<&String> = results.iter().filter(|(_, r)| r.is_err()).map(|(k, _)| k).collect();
        if !failed.is_empty() {
            metadata.insert("failed_subtasks".into(), json!(failed));
        }
        Ok((content, Vec::new(), String::new()))
    }

    fn decompose_with_retry(
        &self,
        query: &str,
        template_strategy: Strategy,
        tree: &SharedTree,
        root: &str,
    ) -> Result<SubtaskGraph, AgentError> {
        let prompt = render_decomposition_prompt(query, template_strategy)
            .expect("non-single strategy template");
        let node = tree
            .record(root, EventType::TaskDecomposition, Map::new(), self.clock.now())
            .ok();
        for attempt in 0..2 {
            let output = match self.backend.generate(&prompt, &self.config.generation) {
                Ok(o) => o,
                Err(e) => {
                    if let Some(n) = &node {
                        tree.close(n, NodeStatus::Failed, self.clock.now()).ok();
                    }
                    return Err(AgentError::Backend(e));
                }
            };
            match parse_decomposition(&output, template_strategy) {
                Ok(graph) => {
                    if let Some(n) = &node {
                        let now = self.clock.now();
                        tree.record_instant(
                            n,
                            EventType::SubAgentSpawn,
                            meta(&[("num_subtasks", json!(graph.subtasks.len()))]),
                            now,
                        )
                        .ok();
                        tree.close(n, NodeStatus::Completed, now).ok();
                    }
                    return Ok(graph);
                }
                Err(e) => {
                    let now = self.clock.now();
                    tree.record_instant(
                        node.as_deref().unwrap_or(root),
                        EventType::ValidationFailed,
                        meta(&[
                            ("validation_type", json!("decomposition_json")),
                            ("errors", json!(e.to_string())),
                            ("attempt", json!(attempt + 1)),
                        ]),
                        now,
                    )
                    .ok();
                }
            }
        }
        if let Some(n) = &node {
            tree.close(n, NodeStatus::Completed, self.clock.now()).ok();
        }
        Err(AgentError::React(ReactError::OutOfIterations { iterations: 2, trace: String::new() }))
    }

    /// Create one sub-agent per subtask: same backend, depth + 1, halved
    /// iteration budget, timeout split across the subtasks, tools inherited
    /// or selected by specialization, memory shared or isolated per config.
    pub fn spawn_sub_agents(
        &self,
        graph: &SubtaskGraph,
        tree: &SharedTree,
        root: &str,
    ) -> Vec<(Subtask, Agent)> {
        let n = graph.subtasks.len().max(1);
        graph
            .subtasks
            .iter()
            .map(|subtask| {
                tree.record_instant(
                    root,
                    EventType::SubAgentSpawn,
                    meta(&[
                        ("specialization", json!(format!("{:?}", subtask.specialization))),
                        ("subtask_id", json!(subtask.id)),
                    ]),
                    self.clock.now(),
                )
                .ok();
                let mut config = self.config.clone();
                config.name = format!("{}/{}", self.config.name, subtask.id);
                config.max_iterations = (self.config.max_iterations / 2).max(1);
                config.timeout = self.config.timeout / n as f64;
                let tools = if self.config.inherit_tools {
                    self.tools.clone()
                } else {
                    Arc::new(select_tools_for_spec(&self.tools, subtask.specialization))
                };
                let memory = if self.config.inherit_memory {
                    self.memory.clone()
                } else {
                    Arc::new(Mutex::new(MemorySystem::new(config.short_term.clone())))
                };
                let agent = Agent {
                    id: format!("{}-{}", self.id, subtask.id),
                    backend: self.backend.clone(),
                    tools,
                    analyzer: self.analyzer.clone(),
                    optimizer: PromptOptimizer::new(config.optimizer_profile.clone()),
                    memory,
                    config,
                    clock: self.clock.clone(),
                    sleeper: self.sleeper.clone(),
                    depth: self.depth + 1,
                    parent_id: Some(self.id.clone()),
                    stats: Arc::new(Mutex::new(AgentStats::default())),
                };
                (subtask.clone(), agent)
            })
            .collect()
    }

    /// Execute the subtask graph level by level: independent subtasks run
    /// concurrently, dependents receive their prerequisites' results as
    /// context, failures are recorded and survivors continue.
    pub fn execute_graph(
        &self,
        agents: &[(Subtask, Agent)],
        graph: &SubtaskGraph,
        tree: &SharedTree,
        root: &str,
        deadline: f64,
    ) -> BTreeMap<String, Result<String, String>> {
        let mut results: BTreeMap<String, Result<String, String>> = BTreeMap::new();
        // Manager synthesis happens separately; schedule only the workers.
        let worker_graph = SubtaskGraph {
            subtasks: graph.subtasks.clone(),
            strategy: graph.strategy,
            parallel_groups: graph.parallel_groups.clone(),
            manager: None,
            warnings: Vec::new(),
        };
        let levels = match topological_levels(&worker_graph) {
            Ok(levels) => levels,
            Err(e) => {
                results.insert("graph".to_string(), Err(e.to_string()));
                return results;
            }
        };
        for level in levels {
            let level_agents: Vec<&(Subtask, Agent)> = agents
                .iter()
                .filter(|(s, _)| level.contains(&s.id))
                .collect();
            let level_outcomes: Vec<(String, Result<String, String>)> =
                std::thread::scope(|scope| {
                    let results_ref = &results;
                    let handles: Vec<_> = level_agents
                        .iter()
                        .map(|(subtask, agent)| {
                            let tree = tree.clone();
                            scope.spawn(move || {
                                let mut task = String::new();
                                for dep in &subtask.depends_on {
                                    if let Some(Ok(prev)) = results_ref.get(dep) {
                                        task.push_str(&format!("Result of {dep}: {prev}\n"));
                                    }
                                }
                                if !task.is_empty() {
                                    task.push('\n');
                                }
                                task.push_str(&subtask.description);
                                let node = tree
                                    .record(
                                        root,
                                        EventType::SubAgentStart,
                                        meta(&[
                                            ("subtask_id", json!(subtask.id)),
                                            ("agent_id", json!(agent.id)),
                                            (
                                                "specialization",
                                                json!(format!("{:?}", subtask.specialization)),
                                            ),
                                        ]),
                                        agent.clock.now(),
                                    )
                                    .ok();
                                let sub_deadline =
                                    (agent.clock.now() + agent.config.timeout).min(deadline);
                                let outcome = match &node {
                                    Some(n) => agent.react(&task, &tree, n, sub_deadline),
                                    None => Err(ReactError::OutOfIterations {
                                        iterations: 0,
                                        trace: String::new(),
                                    }),
                                };
                                let now = agent.clock.now();
                                let result = match outcome {
                                    Ok(out) => {
                                        if let Some(n) = &node {
                                            tree.record_instant(
                                                n,
                                                EventType::SubAgentComplete,
                                                meta(&[("tools_called", json!(out.tool_calls.len()))]),
                                                now,
                                            )
                                            .ok();
                                            tree.close(n, NodeStatus::Completed, now).ok();
                                        }
                                        Ok(out.answer)
                                    }
                                    Err(e) => {
                                        if let Some(n) = &node {
                                            tree.record_instant(
                                                n,
                                                EventType::SubAgentFailed,
                                                meta(&[("error", json!(e.to_string()))]),
                                                now,
                                            )
                                            .ok();
                                            tree.close(n, NodeStatus::Completed, now).ok();
                                        }
                                        Err(e.to_string())
                                    }
                                };
                                (subtask.id.clone(), result)
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("subtask thread panicked")).collect()
                });
            results.extend(level_outcomes);
        }
        results
    }

    /// One synthesis call combining all subtask results (and naming the
    /// failures). A backend failure degrades to concatenated raw results
    /// with a warning flag.
    pub fn synthesize_results(
        &self,
        results: &BTreeMap<String, Result<String, String>>,
        original_query: &str,
        manager_description: Option<&str>,
        tree: &SharedTree,
        root: &str,
        graph: &SubtaskGraph,
    ) -> (String, bool) {
        let order: Vec<&str> = graph.subtasks.iter().map(|s| s.id.as_str()).collect();
        let mut succeeded = String::new();
        let mut failed = String::new();
        for id in &order {
            match results.get(*id) {
                Some(Ok(result)) => succeeded.push_str(&format!("- {id}: {result}\n")),
                Some(Err(error)) => failed.push_str(&format!("- {id}: {error}\n")),
                None => {}
            }
        }
        let mut prompt = String::from("Combine the subtask results into one answer to the original task.\n");
        if let Some(desc) = manager_description {
            prompt.push_str(&format!("Coordination brief: {desc}\n"));
        }
        prompt.push_str(&format!("\nOriginal task: {original_query}\n\nSubtask results:\n{succeeded}"));
        if !failed.is_empty() {
            prompt.push_str(&format!(
                "\nFailed subtasks (note the gaps these leave in the answer):\n{failed}"
            ));
        }
        let node = tree
            .record(root, EventType::ResultSynthesis, Map::new(), self.clock.now())
            .ok();
        let outcome = self.backend.generate(&prompt, &self.config.generation);
        let now = self.clock.now();
        if let Some(n) = &node {
            let status = if outcome.is_ok() { NodeStatus::Completed } else { NodeStatus::Failed };
            tree.close(n, status, now).ok();
        }
        match outcome {
            Ok(text) => (text, false),
            Err(_) => {
                // Degrade to raw concatenation rather than losing the work.
                let mut combined = String::new();
                for id in &order {
                    if let Some(Ok(result)) = results.get(*id) {
                        combined.push_str(&format!("{id}: {result}\n"));
                    }
                }
                if !failed.is_empty() {
                    combined.push_str(&format!("\nFailed subtasks:\n{failed}"));
                }
                (combined, true)
            }
        }
    }
}

/// Tool subsets per specialization when tools are not inherited wholesale.
pub fn select_tools_for_spec(parent: &ToolRegistry, spec: Specialization) -> ToolRegistry {
    let wanted: &[&str] = match spec {
        Specialization::Research => &["web_search"],
        Specialization::Coding => &["calculator", "file_operations"],
        Specialization::Analysis => &["calculator"],
        Specialization::Data => &["calculator", "file_operations"],
        Specialization::Synthesis | Specialization::Creative => &[],
        Specialization::General => return clone_registry(parent),
    };
    let registry = ToolRegistry::new();
    for name in wanted {
        if let Some(tool) = parent.get(name) {
            let _ = registry.register(tool);
        }
    }
    registry
}

fn clone_registry(parent: &ToolRegistry) -> ToolRegistry {
    let registry = ToolRegistry::new();
    for name in parent.names() {
        if let Some(tool) = parent.get(&name) {
            let _ = registry.register(tool);
        }
    }
    registry
}

fn tree_depth(tree: &ExecutionTree) -> usize {
    fn depth_of(tree: &ExecutionTree, id: &str) -> usize {
        let node = tree.get(id).unwrap();
        1 + node.children.iter().map(|c| depth_of(tree, c)).max().unwrap_or(0)
    }
    depth_of(tree, tree.root_id())
}

/// Resolve a completion backend from a config document: `model.backend:
/// http` (or a present `model.api_base`) builds the OpenAI-compatible HTTP
/// client.
pub fn backend_from_document(doc: &ConfigDocument) -> Result<Arc<dyn CompletionBackend>, AgentError> {
    let kind = doc.get_str("model.backend").unwrap_or("http");
    let api_base = doc.get_str("model.api_base");
    match (kind, api_base) {
        ("http", Some(base)) | ("openai", Some(base)) | ("vllm", Some(base)) => {
            let model = doc.get_str("model.name").unwrap_or("local-model").to_string();
            let api_key = doc.get_str("model.api_key").map(str::to_string).filter(|k| !k.is_empty());
            let mut backend = HttpBackend::from_base_url(base, model, api_key)
                .map_err(AgentError::Backend)?;
            if let Some(window) = doc.get_u64("model.context_window") {
                backend.context_window = window as usize;
            }
            Ok(Arc::new(backend))
        }
        _ => Err(AgentError::NoBackend),
    }
}

/// Configuration paths that matter when building the default file-ops
/// allowed roots for the CLI.
pub fn default_allowed_roots() -> Vec<PathBuf> {
    std::env::current_dir().map(|d| vec![d]).unwrap_or_default()
}
