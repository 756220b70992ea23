//! A full agent run against the deterministic scripted backend: routing,
//! a four-step ReAct calculator session, memory update, and the execution
//! trace — no model, no network.
//!
//! ```bash
//! cargo run -p kestrel --example scripted_agent
//! ```

use std::sync::Arc;

use kestrel::agent::{Agent, ScriptedBackend};
use kestrel::tools::ToolRegistry;
use kestrel::tracking::export_markdown;

fn turn(expr: &str) -> String {
    format!("Thought: work step by step.\nAction: calculator\nAction Input: {{\"expression\": \"{expr}\"}}")
}

fn main() {
    let query = "Calculate the total cost of buying 3 laptops at $899 each with 8% sales tax, \
                 then find the per-laptop cost after a $50 group discount.";

    // The script mirrors how a small model walks the laptop problem.
    let backend = ScriptedBackend::new("scripted-demo")
        .expect_contains("Task:", turn("3 * 899"))
        .expect_contains("\"result\":2697", turn("2697 * 1.08"))
        .expect_contains("\"result\":2912.76", turn("2912.76 - 50"))
        .expect_contains("\"result\":2862.76", turn("2862.76 / 3"))
        .expect_contains(
            "954.25",
            "Thought: all steps done.\nFinal Answer: The total cost for 3 laptops with 8% sales tax \
             is $2,912.76. After applying the $50 group discount, the total becomes $2,862.76. The \
             per-laptop cost is $954.25.",
        );

    let agent = Agent::builder(Arc::new(backend))
        .with_tools(Arc::new(ToolRegistry::with_builtins(vec![])))
        .build();

    let response = agent.run(query, None).unwrap();
    println!("answer: {}\n", response.content);
    println!("routing: {} (complexity {:.2})",
        response.metadata["routing_strategy"],
        response.metadata["complexity_score"].as_f64().unwrap());
    println!("tool calls:");
    for call in &response.tool_calls {
        println!("  {}({}) -> {}", call.tool, call.args["expression"], call.observation);
    }
    println!("\n{}", export_markdown(&response.tree));
}
