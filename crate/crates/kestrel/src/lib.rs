//! Kestrel is an agent orchestration kernel built for small language models.
//!
//! Small models are cheap to run but unforgiving: they lose the thread in
//! long prompts, overrun their context windows, and waste tokens on tasks
//! that should have been split up (or never split up at all). Kestrel
//! front-loads those decisions so the model never has to make them:
//!
//! - [`complexity`] scores a query on five weighted factors *before* any
//!   model call and routes it to single-agent or decomposed execution.
//! - [`promptopt`] compresses prompts with model-size-aware rules: pattern
//!   replacement, sentence splitting, redundancy removal, bullet
//!   formatting, and sentence-boundary truncation.
//! - [`decompose`] turns complex queries into subtask graphs with
//!   dependency DAGs, using strategy-specific prompts and a tolerant JSON
//!   parser.
//! - [`chains`] executes multi-step prompt chains (sequential, conditional,
//!   iterative, parallel, hybrid) over a shared variable state.
//! - [`memory`] provides three tiers: a bounded short-term buffer with
//!   summarization triggers, a long-term episodic store with importance
//!   scoring, and an exact cosine vector store.
//! - [`protocols`] speaks MCP (JSON-RPC 2.0), A2A task lifecycles, and ACP
//!   manifests/tokens, with a canonical tool form bridging all three.
//! - [`tools`] is the registry plus built-ins: a safe expression
//!   calculator, path-validated file operations, and a cached rate-limited
//!   web search.
//! - [`resilience`] supplies retry with exponential backoff, circuit
//!   breakers, and progressive context compression.
//! - [`tracking`] records every execution event in a hierarchical tree and
//!   derives metrics, bottlenecks, critical paths, and progress estimates.
//! - [`gpuplan`] is pure-function GPU planning over caller-supplied device
//!   snapshots.
//! - [`config`] loads, substitutes, validates, merges, and hot-reloads YAML
//!   or JSON configuration.
//! - [`agent`] ties it together: the ReAct loop, sub-agent spawning, graph
//!   execution, and result synthesis over a pluggable completion backend.
//!
//! All model inference goes through [`agent::CompletionBackend`]; the crate
//! ships a deterministic scripted backend for tests and examples and a
//! generic OpenAI-compatible HTTP backend for real deployments.
//!
//! See the `examples/` directory for one runnable program per capability:
//!
//! ```bash
//! cargo run -p kestrel --example complexity_routing
//! cargo run -p kestrel --example scripted_agent
//! ```

pub mod agent;
pub mod chains;
pub mod complexity;
pub mod config;
pub mod decompose;
pub mod gpuplan;
pub mod memory;
pub mod promptopt;
pub mod protocols;
pub mod resilience;
pub mod tools;
pub mod tracking;
pub mod util;

pub use agent::{Agent, AgentResponse, CompletionBackend, ScriptedBackend};
pub use complexity::{ComplexityAnalyzer, RoutingThresholds, Strategy, TaskProfile};
pub use decompose::{Subtask, SubtaskGraph};
pub use memory::MemorySystem;
pub use promptopt::{OptimizerProfile, PromptOptimizer, SizeClass};
pub use tracking::ExecutionTree;
