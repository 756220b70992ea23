//! Record a hierarchical execution tree, derive its metrics, find the
//! bottlenecks and critical path, and export it three ways.
//!
//! ```bash
//! cargo run -p kestrel --example execution_tracking
//! ```

use std::collections::BTreeMap;

use kestrel::tracking::{
    bottlenecks, critical_path, eta, export_csv, export_json, export_markdown, metrics, progress,
    Eta, EventType, ExecutionTree, NodeStatus,
};
use serde_json::{json, Map, Value};

fn meta(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn main() {
    let mut tree = ExecutionTree::start(
        EventType::TaskStart,
        meta(&[("task_description", json!("Analyze Q3 sales data and report"))]),
        0.0,
    );
    let root = tree.root_id().to_string();
    tree.record_instant(&root, EventType::RoutingDecision, meta(&[("strategy", json!("PARALLEL"))]), 0.2).unwrap();

    // Two sub-agents working concurrently, one with a slow tool call.
    let a = tree.record(&root, EventType::SubAgentStart, meta(&[("subtask_id", json!("st_1"))]), 0.5).unwrap();
    let think = tree.record(&a, EventType::ReasoningStep, Map::new(), 0.5).unwrap();
    tree.close(&think, NodeStatus::Completed, 2.0).unwrap();
    let tool = tree
        .record(&a, EventType::ToolCallStart, meta(&[("tool_name", json!("web_search"))]), 2.0)
        .unwrap();
    tree.close(&tool, NodeStatus::Completed, 6.5).unwrap();
    tree.close(&a, NodeStatus::Completed, 6.6).unwrap();

    let b = tree.record(&root, EventType::SubAgentStart, meta(&[("subtask_id", json!("st_2"))]), 0.5).unwrap();
    let calc = tree
        .record(&b, EventType::ToolCallStart, meta(&[("tool_name", json!("calculator"))]), 0.6)
        .unwrap();
    tree.close(&calc, NodeStatus::Completed, 0.7).unwrap();
    tree.close(&b, NodeStatus::Completed, 3.0).unwrap();

    println!("progress mid-run: {:.2}", progress(&tree, 5.0));
    match eta(&tree, 5.0, 0.0) {
        Eta::At(at) => println!("eta: t={at:.1}s"),
        Eta::Unknown => println!("eta: unknown"),
    }

    let synth = tree.record(&root, EventType::ResultSynthesis, Map::new(), 6.6).unwrap();
    tree.close(&synth, NodeStatus::Completed, 7.4).unwrap();
    tree.close(&root, NodeStatus::Completed, 7.5).unwrap();

    let m = metrics(&tree).unwrap();
    println!("\ntotal {:.1}s, tools {:.1}s, overhead {:.1}s", m.t_total, m.t_tools, m.t_overhead);
    println!("peak concurrent agents: {}", m.peak_concurrent_agents);
    println!("parallel efficiency: {:.2}", m.parallel_efficiency);

    let baselines = BTreeMap::from([("web_search".to_string(), 1.5), ("calculator".to_string(), 0.1)]);
    println!("\nbottlenecks:");
    for b in bottlenecks(&tree, &baselines) {
        println!("  {:?} {} ({:.2})", b.kind, b.node_id, b.value);
    }

    let (path, length) = critical_path(&tree);
    println!("\ncritical path ({length:.1}s): {path:?}");

    println!("\n--- CSV ---\n{}", export_csv(&tree));
    println!("--- Markdown ---\n{}", export_markdown(&tree));
    let json_export = export_json(&tree);
    println!("--- JSON (first 200 chars) ---\n{}...", &json_export[..200.min(json_export.len())]);
}
