//! Execute prompt chains over a shared variable state: a sequential
//! research chain, then a self-critique iterative chain with an early-stop
//! condition.
//!
//! ```bash
//! cargo run -p kestrel --example prompt_chains
//! ```

use kestrel::chains::{
    Chain, ChainExecutor, ChainState, ChainStep, ChainStrategy, StepRunner,
};
use kestrel::util::ThreadSleeper;
use serde_json::{json, Value};

/// A stand-in model: answers prompts with canned text keyed by content.
struct DemoRunner;

impl StepRunner for DemoRunner {
    fn run_prompt(&self, prompt: &str, _step: &ChainStep) -> Result<Value, String> {
        if prompt.contains("Find sources") {
            Ok(json!("three solid sources on solid-state batteries"))
        } else if prompt.contains("Summarize") {
            Ok(json!("Solid-state batteries are moving from labs to pilot lines."))
        } else if prompt.contains("Critique draft 0") {
            Ok(json!(0.6))
        } else if prompt.contains("Critique") {
            Ok(json!(0.93))
        } else {
            Ok(json!(format!("draft about: {}", prompt.lines().last().unwrap_or(""))))
        }
    }

    fn run_tool(&self, tool: &str, _step: &ChainStep, _state: &ChainState) -> Result<Value, String> {
        Ok(json!(format!("tool {tool} ran")))
    }

    fn run_function(&self, name: &str, _state: &ChainState) -> Result<Value, String> {
        Ok(json!(format!("fn {name} ran")))
    }
}

fn main() {
    let sleeper = ThreadSleeper;
    let executor = ChainExecutor::new(&DemoRunner, &sleeper);

    // Sequential: gather -> summarize, passing results through variables.
    let chain = Chain::new(
        "research",
        ChainStrategy::Sequential,
        vec![
            ChainStep::prompt("gather", "Find sources on {topic}").with_output_var("sources"),
            ChainStep::prompt("summarize", "Summarize: {sources}").with_output_var("summary"),
        ],
    );
    let state = ChainState::default().with_var("topic", json!("solid-state batteries"));
    let done = executor.run(&chain, state).unwrap();
    println!("sequential statuses: {:?}", done.statuses);
    println!("summary: {}\n", done.variables["summary"]);

    // Iterative self-critique: stop once the critique score clears 0.9.
    let mut critique = Chain::new(
        "refine",
        ChainStrategy::Iterative,
        vec![
            ChainStep::prompt("draft", "Write draft {iteration_count} of the abstract")
                .with_output_var("draft"),
            ChainStep::prompt("critique", "Critique draft {iteration_count}: {draft}")
                .with_output_var("quality_score"),
        ],
    );
    critique.max_iterations = 5;
    critique.early_stop = Some("quality_score >= 0.9".to_string());
    let done = executor.run(&critique, ChainState::default()).unwrap();
    println!("iterative passes: {}", done.iteration_count);
    println!("final quality: {}", done.variables["quality_score"]);
}
