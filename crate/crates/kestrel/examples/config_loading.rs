//! Configuration lifecycle: environment substitution, `extends`
//! inheritance with deep merge, phase-by-phase validation, and default
//! injection.
//!
//! ```bash
//! cargo run -p kestrel --example config_loading
//! ```

use std::collections::BTreeMap;

use kestrel::config::{
    apply_defaults, load_with_env, merge, substitute_env, validate, ConfigDocument, SchemaSpec,
};
use serde_json::json;

fn main() {
    // Environment substitution with defaults.
    let env: BTreeMap<String, String> = [("API_KEY".to_string(), "sk-demo".to_string())].into();
    let text = "model: ${MODEL_NAME:Qwen-fallback}\nkey: ${API_KEY}";
    println!("substituted:\n{}\n", substitute_env(text, &env).unwrap());

    // extends + deep merge from files.
    let dir = std::env::temp_dir().join("kestrel-config-demo");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(
        dir.join("base.yaml"),
        "agent:\n  name: base_agent\nmodel:\n  generation_config:\n    temperature: 0.0\n    top_p: 0.9\ntools:\n  - name: calculator\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("prod.yaml"),
        "extends: base.yaml\nagent:\n  name: production_agent\nmodel:\n  generation_config:\n    temperature: 0.7\ntools:\n  - name: web_search\n",
    )
    .unwrap();
    let doc = load_with_env(&dir.join("prod.yaml"), &BTreeMap::new()).unwrap();
    println!("merged agent.name: {:?}", doc.get_str("agent.name"));
    println!("merged temperature: {:?} (top_p inherited: {:?})", doc.get_f64("model.generation_config.temperature"), doc.get_f64("model.generation_config.top_p"));
    println!("tools replaced outright: {}\n", doc.get("tools").unwrap());

    // Validation: a weight vector off by 0.05 is an error; an unknown key
    // is only a warning.
    let schema = SchemaSpec::builtin();
    let bad = ConfigDocument::from_value(json!({
        "complexity": {"weights": {
            "task_length": 0.10, "requirement_count": 0.25, "domain_breadth": 0.20,
            "tool_requirements": 0.20, "reasoning_depth": 0.20
        }},
        "model": {"future_flag": true}
    }));
    let report = validate(&bad, &schema);
    for (path, message) in &report.errors {
        println!("error   {path}: {message}");
    }
    for (path, message) in &report.warnings {
        println!("warning {path}: {message}");
    }

    // Defaults land after the final merge.
    let minimal = ConfigDocument::from_value(json!({"agent": {"name": "tiny"}}));
    let effective = apply_defaults(&merge(&ConfigDocument::empty(), &minimal), &schema);
    println!("\ndefaults: threshold={:?}, max_iterations={:?}",
        effective.get_f64("complexity.threshold"),
        effective.get_u64("execution.max_iterations"));
}
