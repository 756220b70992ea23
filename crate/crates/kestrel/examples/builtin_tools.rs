//! The built-in tools: safe expression calculator, path-validated file
//! operations, and cached, rate-limited web search.
//!
//! ```bash
//! cargo run -p kestrel --example builtin_tools
//! ```

use std::sync::Arc;

use kestrel::tools::{
    calc_eval, health, validate_path, FixtureSearchClient, ToolHealth, ToolRegistry, Verbosity,
    WebSearchTool,
};
use serde_json::json;

fn main() {
    // Calculator: a whitelisted expression grammar, nothing else resolves.
    for expr in ["3 * 899", "2697 * 1.08", "sqrt(pow(3,2)+pow(4,2))", "mean([1,2,3,4,5])"] {
        println!("calc {expr:<28} = {}", calc_eval(expr).unwrap().formatted());
    }
    for probe in ["__import__('os')", "open('/etc/passwd')", "x = 5"] {
        println!("calc {probe:<28} -> {}", calc_eval(probe).unwrap_err());
    }

    // Path validation: absolute, traversal-free, inside allowed roots.
    let tmp = std::env::temp_dir();
    let roots = vec![tmp.clone()];
    let good = tmp.join("notes.txt");
    println!("\nvalidate {:?}: {:?}", good, validate_path(&good.to_string_lossy(), &roots).is_ok());
    for bad in ["relative.txt", "/etc/passwd", &format!("{}/../etc/passwd", tmp.display())] {
        println!("validate {bad:?}: {}", validate_path(bad, &roots).unwrap_err());
    }

    // Registry execution with parameter validation and health accounting.
    let registry = ToolRegistry::with_builtins(vec![tmp]);
    let mut args = serde_json::Map::new();
    args.insert("expression".to_string(), json!("41 + 1"));
    let result = registry.execute("calculator", &args).unwrap();
    println!("\nregistry calculator -> {}", result.value["formatted"]);
    let stats = registry.health_of("calculator").unwrap();
    println!("calculator health: {:?}", health(&stats));

    // A degraded tool: half its calls fail and it runs at half its timeout.
    let sick = ToolHealth { successes: 50, total: 100, avg_latency: 15.0, timeout: 30.0 };
    println!("degraded tool health: {:?} (alert below 0.5)", health(&sick));

    // Web search: same query in the same 5-minute bucket hits the cache.
    let client = Arc::new(FixtureSearchClient::new());
    let search = WebSearchTool::new(client.clone());
    let now = 1_000.0;
    search.search("duckduckgo", "rust agents", Verbosity::Standard, now).unwrap();
    let cached = search.search("duckduckgo", "rust agents", Verbosity::Standard, now + 60.0).unwrap();
    println!("\nweb search (cached, {} client call):\n{cached}", client.calls());
}
