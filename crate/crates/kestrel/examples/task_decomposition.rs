//! Render a decomposition prompt, parse a (canned) model reply into a
//! subtask DAG, and schedule it by dependency level.
//!
//! ```bash
//! cargo run -p kestrel --example task_decomposition
//! ```

use kestrel::complexity::Strategy;
use kestrel::decompose::{
    parse_decomposition, quality, render_decomposition_prompt, topological_levels,
};

fn main() {
    let task = "Research the top 3 ML frameworks, compare their features, and create a summary table.";
    let prompt = render_decomposition_prompt(task, Strategy::Hybrid).unwrap();
    println!("--- decomposition prompt (first 5 lines) ---");
    for line in prompt.lines().take(5) {
        println!("{line}");
    }

    // What a small model typically returns: JSON wrapped in prose.
    let model_reply = r#"Here is my decomposition:
{
  "subtasks": [
    {"id": "st_1", "description": "Identify the top 3 ML frameworks in 2024",
     "expected_output": "list of 3 frameworks", "estimated_complexity": 4.0,
     "required_specialization": "research", "priority": "high"},
    {"id": "st_2", "description": "Gather feature details for each framework",
     "expected_output": "feature notes", "estimated_complexity": 5.0,
     "required_specialization": "research", "priority": "high"},
    {"id": "st_3", "description": "Compare ease of use, performance, community",
     "depends_on": ["st_1", "st_2"], "estimated_complexity": 6.0,
     "required_specialization": "analysis", "priority": "medium"},
    {"id": "st_4", "description": "Create the summary table with pros and cons",
     "depends_on": ["st_3"], "estimated_complexity": 5.0,
     "required_specialization": "synthesis", "priority": "medium"}
  ],
  "reasoning": "parallel research feeding a comparison and a table"
}"#;

    let graph = parse_decomposition(model_reply, Strategy::Hybrid).unwrap();
    println!("\nparsed {} subtasks, {} edges", graph.subtasks.len(), graph.edges().len());
    for level in topological_levels(&graph).unwrap() {
        println!("  level: {level:?}");
    }
    let metrics = quality(&graph, 4, 4).unwrap();
    println!(
        "quality: coverage {:.2}, granularity {:.1}, parallelism {:.2}",
        metrics.coverage, metrics.granularity, metrics.parallelism
    );
}
