//! Score queries on the five complexity factors and route them before any
//! model call.
//!
//! ```bash
//! cargo run -p kestrel --example complexity_routing
//! ```

use kestrel::complexity::{heuristic_dependency_probe, route, ComplexityAnalyzer, RoutingThresholds};

fn main() {
    let analyzer = ComplexityAnalyzer::default();
    let thresholds = RoutingThresholds::default();

    let queries = [
        "What is 2+2?",
        "Calculate the total cost of buying 3 laptops at $899 each with 8% sales tax, then find the per-laptop cost after a $50 group discount.",
        "Research the top 3 machine learning frameworks in 2024, compare their features including ease of use, performance, and community support, and create a summary table with pros and cons for each.",
        "Synthesize a comprehensive market-entry strategy: research competitors and analyze pricing, evaluate regulations, then design the launch plan.",
    ];

    for query in queries {
        let profile = analyzer.analyze(query);
        let strategy = route(&profile, &thresholds, || heuristic_dependency_probe(query));
        let f = profile.factor_scores;
        println!("query: {query}");
        println!(
            "  factors: len={:.1} req={:.1} dom={:.1} tool={:.1} reas={:.1}",
            f.task_length, f.requirement_count, f.domain_breadth, f.tool_requirements, f.reasoning_depth
        );
        println!("  score:   {:.2}  ->  {strategy}\n", profile.score);
    }
}
