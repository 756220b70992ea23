//! Acceptance suite: ten criteria covering complexity scoring and routing,
//! prompt optimization, memory, protocols, resilience, tracking, GPU
//! planning, the scripted end-to-end agent, and configuration.
//!
//! Each criterion prints one PASS/FAIL line per clause (run with
//! `cargo test --test acceptance -- --nocapture` to see them all) and the
//! test fails if any clause fails. Run the whole suite with:
//!
//! ```bash
//! cargo test -p kestrel --test acceptance
//! ```

use std::collections::BTreeMap;
use std::panic::catch_unwind;
use std::sync::Arc;

use serde_json::{json, Map, Value};

use kestrel::agent::{Agent, ScriptedBackend};
use kestrel::chains::{evaluate_condition, ChainState};
use kestrel::complexity::{
    route, ComplexityAnalyzer, DependencySummary, RoutingThresholds, Strategy, TaskProfile,
};
use kestrel::config::{
    apply_defaults, merge, substitute_env, validate, ConfigDocument, SchemaSpec,
};
use kestrel::decompose::parse_decomposition;
use kestrel::gpuplan::{
    classify_alert, estimate_mem, pipeline_efficiency, select_parallelism, AlertLevel,
    DeviceSnapshot, ModelSpec, ParallelismStrategy,
};
use kestrel::memory::{
    consolidate, cosine, default_keywords, estimate_tokens, importance, recency, EntryType,
    ImportanceLevel, Message, MemoryEntry, MemorySystem, Role, ShortTermConfig, VectorMemory,
    DEFAULT_DECAY_LAMBDA,
};
use kestrel::promptopt::{
    bullet_format, compress, est_tokens, optimize, remove_redundancy, OptimizerProfile,
    PatternTable, SizeClass,
};
use kestrel::protocols::{
    a2a::{A2aMessage, A2aPart, A2aTask, PartType, TaskState},
    acp::{acp_token_valid, AcpRequest, AcpToken, RequestType},
    bridge::{self, CanonicalTool},
    mcp_decode, mcp_encode, McpErrorObject, McpId, McpMessage, INTERNAL_ERROR, INVALID_PARAMS,
    INVALID_REQUEST, METHOD_NOT_FOUND, PARSE_ERROR, SERVER_ERROR,
};
use kestrel::resilience::{
    backoff_delay, compress_context, BreakerConfig, BreakerState, CircuitBreaker, ErrorKind,
    RetryPolicy, TOOL_OUTPUT_CAP,
};
use kestrel::tools::ToolRegistry;
use kestrel::tracking::{
    critical_path, export_csv, metrics, verify_raw, EventType, ExecutionTree, InvariantViolation,
    NodeStatus, RawNode, CSV_HEADER,
};
use kestrel::util::{parse_rfc3339, DetRng};

const CASE_STUDY_1: &str = "Calculate the total cost of buying 3 laptops at $899 each with 8% sales tax, then find the per-laptop cost after a $50 group discount.";
const CASE_STUDY_2: &str = "Research the top 3 machine learning frameworks in 2024, compare their features including ease of use, performance, and community support, and create a summary table with pros and cons for each.";
/// A query that clears the decomposition threshold under the default
/// weights and keyword tables (C = 7.4).
const COMPLEX_QUERY: &str = "Research current agent frameworks and analyze their code quality, compare community support, then create a summary table with pros and cons, and design a migration plan; include recommendations.";

fn clause(label: &str, f: impl FnOnce() + std::panic::UnwindSafe) -> Result<(), String> {
    let outcome = catch_unwind(f);
    match outcome {
        Ok(()) => {
            println!("[PASS] {label}");
            Ok(())
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            println!("[FAIL] {label}: {message}");
            Err(format!("{label}: {message}"))
        }
    }
}

fn finish(results: Vec<Result<(), String>>) {
    let failures: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    assert!(failures.is_empty(), "failed clauses:\n{}", failures.join("\n"));
}

// -------------------------------------------------------------------------
// Criterion 1: complexity worked examples
// -------------------------------------------------------------------------

#[test]
fn criterion_01_complexity() {
    let analyzer = ComplexityAnalyzer::default();
    let results = vec![
        clause("1a case study 1 factor vector (4.0, 6.0, 5.0, 2.5, 7.0), C = 5.00 +/- 0.01", {
            let analyzer = analyzer.clone();
            move || {
                let profile = analyzer.analyze(CASE_STUDY_1);
                assert_eq!(profile.factor_scores.as_array(), [4.0, 6.0, 5.0, 2.5, 7.0]);
                assert!(
                    (profile.score - 5.0).abs() <= 0.01,
                    "C = {} not within 0.01 of 5.00",
                    profile.score
                );
            }
        }),
        clause("1b case study 2 C = 7.30 +/- 0.01", {
            let analyzer = analyzer.clone();
            move || {
                let profile = analyzer.analyze(CASE_STUDY_2);
                assert!(
                    (profile.score - 7.3).abs() <= 0.01,
                    "C = {} not within 0.01 of 7.30 (factors {:?})",
                    profile.score,
                    profile.factor_scores.as_array()
                );
            }
        }),
        clause("1c requirement-count examples reproduce (1, 3, 3)", {
            let analyzer = analyzer.clone();
            move || {
                assert_eq!(analyzer.count_requirements("What is 2+2?").0, 1);
                assert_eq!(
                    analyzer
                        .count_requirements("Research X and compare with Y, then summarize findings")
                        .0,
                    3
                );
                assert_eq!(
                    analyzer
                        .count_requirements(
                            "Create report including: (1) analysis, (2) data, (3) recommendations"
                        )
                        .0,
                    3
                );
            }
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Criterion 2: routing over a generated corpus
// -------------------------------------------------------------------------

fn synthetic_profile(rng: &mut DetRng) -> TaskProfile {
    let analyzer = ComplexityAnalyzer::default();
    let mut profile = analyzer.analyze("placeholder");
    let factors = [
        2.0 + 2.0 * rng.below(5) as f64,
        2.0 * rng.below(6) as f64,
        2.5 * rng.below(5) as f64,
        2.5 * rng.below(5) as f64,
        [3.0, 5.0, 7.0, 9.0][rng.below(4)],
    ];
    let w = analyzer.weights;
    profile.score = w.task_length * factors[0]
        + w.requirement_count * factors[1]
        + w.domain_breadth * factors[2]
        + w.tool_requirements * factors[3]
        + w.reasoning_depth * factors[4];
    profile
}

#[test]
fn criterion_02_routing() {
    let thresholds = RoutingThresholds::default();
    let results = vec![
        clause("2a C < 7.0 always routes SINGLE and never probes dependencies", || {
            let mut rng = DetRng::new(21);
            let mut below = 0;
            for _ in 0..2000 {
                let profile = synthetic_profile(&mut rng);
                if profile.score < 7.0 {
                    below += 1;
                    let mut probed = false;
                    let strategy = route(&profile, &thresholds, || {
                        probed = true;
                        DependencySummary::Mixed
                    });
                    assert_eq!(strategy, Strategy::Single, "C = {}", profile.score);
                    assert!(!probed, "probe invoked for C = {}", profile.score);
                }
            }
            assert!(below > 100, "corpus should have sub-threshold scores");
        }),
        clause("2b C >= 8.5 always routes HIERARCHICAL", || {
            let mut rng = DetRng::new(22);
            let mut above = 0;
            for _ in 0..2000 {
                let profile = synthetic_profile(&mut rng);
                if profile.score >= 8.5 {
                    above += 1;
                    for deps in [
                        DependencySummary::Independent,
                        DependencySummary::LinearChain,
                        DependencySummary::Mixed,
                    ] {
                        assert_eq!(
                            route(&profile, &thresholds, || deps),
                            Strategy::Hierarchical,
                            "C = {}",
                            profile.score
                        );
                    }
                }
            }
            assert!(above > 20, "corpus should have hierarchical scores");
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Criterion 3: prompt optimization
// -------------------------------------------------------------------------

const VERBOSE_COMPOUND_INTEREST_PROMPT: &str = "\
Please help me solve this financial mathematics problem. In order to calculate the compound \
interest, you need to consider the following details carefully. We have a principal amount of \
$5000, and we want to find out how much it will grow to after 3 years. The interest rate is 6% \
per year, but it is important to note that the interest is compounded quarterly, which means it \
compounds 4 times per year. Compound interest calculations can be complex, so please use the \
calculator tool for accuracy. Make sure to show every intermediate value in order to keep the \
reasoning transparent. In order to calculate the compound interest, you need to consider the \
following details carefully. We have a principal amount of $5000, and we want to find out how \
much it will grow to after 3 years. The interest rate is 6% per year, but it is important to \
note that the interest is compounded quarterly, which means it compounds 4 times per year. \
Compound interest calculations can be complex, so please use the calculator tool for accuracy. \
Make sure to show every intermediate value in order to keep the reasoning transparent. As a \
reminder, in order to calculate the compound interest, you need to consider the following \
details carefully. We have a principal amount of $5000, and we want to find out how much it \
will grow to after 3 years. The interest rate is 6% per year, but it is important to note that \
the interest is compounded quarterly, which means it compounds 4 times per year. Compound \
interest calculations can be complex, so please use the calculator tool for accuracy. Make sure \
to show every intermediate value in order to keep the reasoning transparent. Thank you. I \
appreciate your help with this, and don't forget to double-check the arithmetic at the end.";

#[test]
fn criterion_03_prompt_optimization() {
    let table = PatternTable::builtin();
    let results = vec![
        clause("3a all 30 patterns replace correctly on a pattern-per-line corpus", {
            let table = table.clone();
            move || {
                assert_eq!(table.entries.len(), 30);
                for entry in &table.entries {
                    let line = format!("alpha {} omega", entry.pattern);
                    let expected = if entry.replacement.is_empty() {
                        "alpha omega".to_string()
                    } else {
                        format!("alpha {} omega", entry.replacement)
                    };
                    assert_eq!(compress(&line, &table), expected, "pattern {:?}", entry.pattern);
                    // Case-insensitive matching.
                    let upper = format!("alpha {} omega", entry.pattern.to_uppercase());
                    assert_eq!(compress(&upper, &table), expected, "pattern {:?} upper", entry.pattern);
                }
            }
        }),
        clause("3b bullet-formatting before/after pair reproduces", || {
            let before = "You are a research assistant. Your task is to search for relevant \
                          information on the given topic using web search tools. After gathering \
                          information, analyze the key findings and identify common themes. Then \
                          synthesize the information into a coherent summary. Make sure to cite \
                          sources and provide specific examples where appropriate.";
            let after = "You are a research assistant. Your task:\n\
                         - Search for relevant information using web search tools\n\
                         - Analyze key findings and identify common themes\n\
                         - Synthesize into coherent summary\n\
                         - Cite sources and provide specific examples";
            assert_eq!(bullet_format(before), after);
        }),
        clause("3c optimized output token estimate <= max_prompt_tokens for all profiles", {
            let table = table.clone();
            move || {
                let mut rng = DetRng::new(33);
                let words = ["analysis", "report", "data", "please", "in", "order", "to",
                             "compute", "the", "value", "and", "then", "summarize", "results",
                             "because", "so", "quickly", "carefully"];
                for _ in 0..100 {
                    let length = 1 + rng.below(1200);
                    let text: Vec<&str> = (0..length).map(|_| words[rng.below(words.len())]).collect();
                    let mut text = text.join(" ");
                    if rng.below(2) == 0 {
                        text.push('.');
                    }
                    for size in [SizeClass::Tiny, SizeClass::Small, SizeClass::Medium, SizeClass::Large, SizeClass::Xl] {
                        let profile = OptimizerProfile::for_size(size);
                        let result = optimize(&text, &profile, &table);
                        assert!(
                            result.optimized_est_tokens <= profile.max_prompt_tokens,
                            "{size:?}: {} > {}",
                            result.optimized_est_tokens,
                            profile.max_prompt_tokens
                        );
                    }
                }
            }
        }),
        clause("3d compress+redundancy halves the verbose compound-interest prompt", {
            let table = table.clone();
            move || {
                let compressed = remove_redundancy(&compress(VERBOSE_COMPOUND_INTEREST_PROMPT, &table));
                let ratio = est_tokens(&compressed) as f64
                    / est_tokens(VERBOSE_COMPOUND_INTEREST_PROMPT) as f64;
                assert!(ratio <= 0.5, "ratio {ratio:.3} > 0.5");
                // The surviving text still carries the problem statement.
                assert!(compressed.contains("$5000"));
            }
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Criterion 4: memory
// -------------------------------------------------------------------------

/// Independent brute-force cosine ranking used as the vector-search oracle.
fn brute_force_top_k(
    entries: &[(String, Vec<f32>)],
    query: &[f32],
    k: usize,
    threshold: f32,
) -> Vec<String> {
    let mut scored: Vec<(usize, f64)> = entries
        .iter()
        .enumerate()
        .map(|(i, (_, v))| {
            let dot: f64 = v.iter().zip(query).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
            let na: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            let nb: f64 = query.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            let sim = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
            (i, sim)
        })
        .filter(|(_, s)| *s >= threshold as f64)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(i, _)| entries[i].0.clone()).collect()
}

#[test]
fn criterion_04_memory() {
    let results = vec![
        clause("4a recency at 7 days equals 1/e within 1e-9", || {
            let r = recency(0.0, 7.0 * 24.0 * 3600.0, DEFAULT_DECAY_LAMBDA);
            assert!((r - (-1.0f64).exp()).abs() < 1e-9, "R = {r}");
        }),
        clause("4b importance worked values 0.97 / 0.19 / 0.425", || {
            let keywords = default_keywords();
            let full = format!(
                "important critical error deadline remember {}",
                vec!["w"; 95].join(" ")
            );
            let e1 = MemoryEntry::new(full, EntryType::Fact, ImportanceLevel::Critical, 0.0);
            assert!((importance(&e1, &keywords) - 0.97).abs() < 1e-12);
            let e2 = MemoryEntry::new("", EntryType::Conversation, ImportanceLevel::Low, 0.0);
            assert!((importance(&e2, &keywords) - 0.19).abs() < 1e-12);
            let fifty = vec!["w"; 50].join(" ");
            let e3 = MemoryEntry::new(fifty, EntryType::Observation, ImportanceLevel::Medium, 0.0);
            assert!((importance(&e3, &keywords) - 0.425).abs() < 1e-12);
        }),
        clause("4c vector search matches the brute-force oracle (200 entries, k in {1,3,10})", || {
            let mut rng = DetRng::new(44);
            let dim = 16;
            let mut store = VectorMemory::new(dim);
            let mut reference: Vec<(String, Vec<f32>)> = Vec::new();
            for i in 0..200 {
                let v: Vec<f32> = (0..dim).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
                let id = format!("e{i:03}");
                store.insert(id.clone(), v.clone()).unwrap();
                reference.push((id, v));
            }
            for trial in 0..20 {
                let query: Vec<f32> = (0..dim).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
                for k in [1usize, 3, 10] {
                    let got: Vec<String> = store
                        .search(&query, k, 0.0)
                        .unwrap()
                        .into_iter()
                        .map(|(id, _)| id)
                        .collect();
                    let want = brute_force_top_k(&reference, &query, k, 0.0);
                    assert_eq!(got, want, "trial {trial}, k {k}");
                }
            }
        }),
        clause("4d consolidation keep-rule truth table (size x role x importance)", || {
            let keywords = default_keywords();
            // Long content (> 50 tokens) with few words keeps the composite
            // importance below 0.3 at LOW; CRITICAL clears it regardless.
            let long_low = format!("lengthy{} note", "x".repeat(260)); // ~70 tokens, 2 words
            let short = "brief note";
            let cases: Vec<(String, Role, ImportanceLevel, bool)> = vec![
                (long_low.clone(), Role::User, ImportanceLevel::Critical, true),
                (long_low.clone(), Role::User, ImportanceLevel::Low, false),
                (long_low.clone(), Role::Tool, ImportanceLevel::Critical, false),
                (long_low.clone(), Role::Tool, ImportanceLevel::Low, false),
                (short.to_string(), Role::User, ImportanceLevel::Critical, false),
                (short.to_string(), Role::User, ImportanceLevel::Low, false),
                (short.to_string(), Role::Tool, ImportanceLevel::Critical, false),
                (short.to_string(), Role::Tool, ImportanceLevel::Low, false),
            ];
            for (content, role, level, expected) in cases {
                let mut messages =
                    vec![Message::new(role, content.clone(), 0.0).with_importance(level)];
                let kept = consolidate(&mut messages, &keywords);
                assert_eq!(
                    !kept.is_empty(),
                    expected,
                    "content tokens {}, role {role:?}, level {level:?}",
                    estimate_tokens(&content),
                );
            }
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Criterion 5: protocols
// -------------------------------------------------------------------------

fn random_string(rng: &mut DetRng) -> String {
    let words = ["alpha", "beta", "line\nbreak", "quote\"inside", "emoji \u{1F680}", "tab\tchar", "{brace}"];
    let mut s = String::new();
    for _ in 0..1 + rng.below(3) {
        s.push_str(words[rng.below(words.len())]);
        s.push(' ');
    }
    s.trim_end().to_string()
}

fn random_json(rng: &mut DetRng, depth: usize) -> Value {
    match if depth == 0 { rng.below(4) } else { rng.below(6) } {
        0 => json!(rng.below(1000) as i64 - 500),
        1 => json!(rng.next_f64()),
        2 => json!(random_string(rng)),
        3 => json!(rng.below(2) == 0),
        4 => Value::Array((0..rng.below(3)).map(|_| random_json(rng, depth - 1)).collect()),
        _ => {
            let mut map = Map::new();
            for i in 0..rng.below(3) {
                map.insert(format!("k{i}"), random_json(rng, depth - 1));
            }
            Value::Object(map)
        }
    }
}

fn random_mcp(rng: &mut DetRng) -> McpMessage {
    let id = if rng.below(2) == 0 {
        McpId::Int(rng.below(100_000) as i64)
    } else {
        McpId::Str(random_string(rng))
    };
    match rng.below(4) {
        0 => McpMessage::Request {
            id,
            method: "tools/call".to_string(),
            params: if rng.below(2) == 0 { Some(random_json(rng, 2)) } else { None },
        },
        1 => McpMessage::Notification {
            method: "notifications/progress".to_string(),
            params: Some(random_json(rng, 2)),
        },
        2 => McpMessage::Response { id, result: random_json(rng, 2) },
        _ => McpMessage::ErrorResponse {
            id: if rng.below(2) == 0 { Some(id) } else { None },
            error: McpErrorObject {
                code: [PARSE_ERROR, INVALID_REQUEST, METHOD_NOT_FOUND, INVALID_PARAMS, INTERNAL_ERROR, SERVER_ERROR][rng.below(6)],
                message: random_string(rng),
                data: if rng.below(2) == 0 { Some(random_json(rng, 1)) } else { None },
            },
        },
    }
}

#[test]
fn criterion_05_protocols() {
    let results = vec![
        clause("5a codec round-trip over 1000+ generated messages per protocol", || {
            let mut rng = DetRng::new(55);
            for _ in 0..1000 {
                let msg = random_mcp(&mut rng);
                assert_eq!(mcp_decode(&mcp_encode(&msg)).unwrap(), msg);
            }
            for i in 0..1000 {
                let mut task = A2aTask::new(
                    format!("task_{i}"),
                    A2aMessage::text(format!("msg_{i}"), random_string(&mut rng), rng.next_f64() * 1e9),
                    rng.next_f64() * 1e9,
                );
                task.instruction.parts.push(A2aPart {
                    part_type: [PartType::Text, PartType::Image, PartType::File, PartType::Structured][rng.below(4)],
                    content: random_string(&mut rng),
                    mime_type: Some("application/octet-stream".to_string()),
                    metadata: BTreeMap::new(),
                });
                let bytes = serde_json::to_vec(&task).unwrap();
                let back: A2aTask = serde_json::from_slice(&bytes).unwrap();
                assert_eq!(back, task);
            }
            for i in 0..1000 {
                let request = AcpRequest {
                    request_id: format!("req_{i}"),
                    agent_id: random_string(&mut rng),
                    capability: "literature_search".to_string(),
                    input: random_json(&mut rng, 2),
                    request_type: [RequestType::Synchronous, RequestType::Asynchronous, RequestType::Streaming][rng.below(3)],
                    context: BTreeMap::new(),
                    timestamp: "2025-01-25T11:00:00Z".to_string(),
                };
                let bytes = serde_json::to_vec(&request).unwrap();
                let back: AcpRequest = serde_json::from_slice(&bytes).unwrap();
                assert_eq!(back, request);
            }
        }),
        clause("5b A2A 6x6 transition matrix matches the seven-edge relation", || {
            use TaskState::*;
            let all = [Created, Pending, Running, Completed, Failed, Cancelled];
            let legal = [
                (Created, Pending),
                (Pending, Running),
                (Running, Completed),
                (Running, Failed),
                (Created, Cancelled),
                (Pending, Cancelled),
                (Running, Cancelled),
            ];
            let mut count = 0;
            for from in all {
                for to in all {
                    let expected = legal.contains(&(from, to));
                    assert_eq!(from.can_transition_to(to), expected, "{from:?} -> {to:?}");
                    count += usize::from(expected);
                }
            }
            assert_eq!(count, 7);
        }),
        clause("5c MCP error-code mapping is exact", || {
            assert_eq!(PARSE_ERROR, -32700);
            assert_eq!(INVALID_REQUEST, -32600);
            assert_eq!(METHOD_NOT_FOUND, -32601);
            assert_eq!(INVALID_PARAMS, -32602);
            assert_eq!(INTERNAL_ERROR, -32603);
            assert_eq!(SERVER_ERROR, -32000);
            assert_eq!(mcp_decode(b"not json {").unwrap_err().code, -32700);
            assert_eq!(mcp_decode(b"{\"id\": 1}").unwrap_err().code, -32600);
            assert_eq!(
                mcp_decode(br#"{"jsonrpc": "1.0", "id": 1, "method": "m"}"#).unwrap_err().code,
                -32600
            );
        }),
        clause("5d ACP token validity truth table (4 combinations)", || {
            let token = AcpToken {
                token_id: "tok".into(),
                agent_id: "agent".into(),
                capabilities: vec!["literature_search".into(), "citation_analysis".into()],
                permissions: BTreeMap::new(),
                expires: "2025-02-25T00:00:00Z".into(),
                metadata: BTreeMap::new(),
            };
            let before = parse_rfc3339("2025-01-26T00:00:00Z").unwrap();
            let after = parse_rfc3339("2025-03-01T00:00:00Z").unwrap();
            assert!(acp_token_valid(&token, "literature_search", before));
            assert!(!acp_token_valid(&token, "literature_search", after));
            assert!(!acp_token_valid(&token, "unknown_capability", before));
            assert!(!acp_token_valid(&token, "unknown_capability", after));
        }),
        clause("5e canonical tool bridge round-trips through MCP, A2A, and ACP", || {
            let tool = CanonicalTool::new(
                "calculator",
                "Evaluate mathematical expressions",
                json!({"type": "object", "properties": {"expression": {"type": "string"}}, "required": ["expression"]}),
            )
            .unwrap()
            .with_output_schema(json!({"type": "object", "properties": {"result": {"type": "number"}}}));
            assert_eq!(bridge::from_mcp(&bridge::to_mcp(&tool)).unwrap(), tool);
            assert_eq!(bridge::from_a2a(&bridge::to_a2a(&tool)).unwrap(), tool);
            assert_eq!(bridge::from_acp(&bridge::to_acp(&tool)).unwrap(), tool);
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Criterion 6: resilience
// -------------------------------------------------------------------------

#[test]
fn criterion_06_resilience() {
    let results = vec![
        clause("6a backoff delays (1, 2, 4)s then clamp at max_delay", || {
            let policy = RetryPolicy { max_retries: 10, base_delay: 1.0, max_delay: 60.0, jitter: 0.0 };
            assert_eq!(backoff_delay(1, &policy, 0.0), 1.0);
            assert_eq!(backoff_delay(2, &policy, 0.0), 2.0);
            assert_eq!(backoff_delay(3, &policy, 0.0), 4.0);
            assert_eq!(backoff_delay(10, &policy, 0.0), 60.0);
            let tool = RetryPolicy::for_kind(ErrorKind::ToolError);
            assert_eq!(backoff_delay(9, &tool, 0.0), tool.max_delay);
        }),
        clause("6b compress_context output <= C_max on 500 random message sets", || {
            let mut rng = DetRng::new(66);
            for _ in 0..500 {
                let count = 1 + rng.below(50);
                let messages: Vec<Message> = (0..count)
                    .map(|i| {
                        let role = match rng.below(4) {
                            0 => Role::System,
                            1 => Role::User,
                            2 => Role::Assistant,
                            _ => Role::Tool,
                        };
                        let words = 1 + rng.below(200);
                        Message::new(role, format!("{} {i}", vec!["word"; words].join(" ")), i as f64)
                    })
                    .collect();
                let c_max = 15 + rng.below(500);
                let (out, _) =
                    compress_context(messages, c_max, &|_| "summary".to_string(), &estimate_tokens);
                let total: usize = out.iter().map(|m| estimate_tokens(&m.content)).sum();
                assert!(total <= c_max, "total {total} > {c_max}");
            }
        }),
        clause("6c level 3 yields exactly 500 chars plus the truncation suffix", || {
            let long_tool = "y".repeat(900);
            let messages = vec![
                Message::new(Role::User, "short", 0.0),
                Message::new(Role::Tool, long_tool, 1.0),
            ];
            let (out, _) = compress_context(messages, 160, &|_| String::new(), &estimate_tokens);
            let tool_msg = out.iter().find(|m| m.role == Role::Tool).expect("tool message kept");
            assert!(tool_msg.content.ends_with("... [truncated]"));
            assert_eq!(
                tool_msg.content.chars().count(),
                TOOL_OUTPUT_CAP + "... [truncated]".chars().count()
            );
        }),
        clause("6d breaker opens at exactly the threshold and rejects without invoking", || {
            let breaker = CircuitBreaker::new(BreakerConfig::default());
            let mut invocations = 0;
            for i in 0..5 {
                assert_eq!(breaker.state(), BreakerState::Closed, "closed before failure {i}");
                let _ = breaker.call(0.0, || -> Result<(), &str> {
                    invocations += 1;
                    Err("down")
                });
            }
            assert_eq!(breaker.state(), BreakerState::Open);
            assert_eq!(invocations, 5);
            let rejected = breaker.call(10.0, || -> Result<(), &str> {
                invocations += 1;
                Ok(())
            });
            assert!(rejected.is_err());
            assert_eq!(invocations, 5, "callback must not run while open");
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Criterion 7: tracking invariants
// -------------------------------------------------------------------------

/// Build a random tree through the validating record/close API.
fn random_valid_tree(rng: &mut DetRng) -> ExecutionTree {
    fn grow(
        tree: &mut ExecutionTree,
        rng: &mut DetRng,
        parent: &str,
        start: f64,
        depth: usize,
    ) -> (f64, bool) {
        let mut t = start;
        let mut any_failed = false;
        let children = if depth >= 3 { 0 } else { rng.below(4) };
        for _ in 0..children {
            t += rng.next_f64();
            let event = [
                EventType::ReasoningStep,
                EventType::ToolCallStart,
                EventType::SubAgentStart,
                EventType::MemoryOperation,
            ][rng.below(4)];
            let id = tree.record(parent, event, Map::new(), t).unwrap();
            let (end, child_failed) = grow(tree, rng, &id, t, depth + 1);
            t = end + rng.next_f64() * 0.1;
            let failed = child_failed || rng.next_f64() < 0.1;
            let status = if failed { NodeStatus::Failed } else { NodeStatus::Completed };
            tree.close(&id, status, t).unwrap();
            any_failed |= failed;
        }
        (t + rng.next_f64() * 0.1, any_failed)
    }
    let mut tree = ExecutionTree::start(EventType::TaskStart, Map::new(), 0.0);
    let root = tree.root_id().to_string();
    let (end, failed) = grow(&mut tree, rng, &root, 0.0, 0);
    let status = if failed { NodeStatus::Failed } else { NodeStatus::Completed };
    tree.close(&root, status, end + 0.5).unwrap();
    tree
}

#[test]
fn criterion_07_tracking() {
    let results = vec![
        clause("7a verifier passes 1000 randomized valid event sequences", || {
            let mut rng = DetRng::new(77);
            for i in 0..1000 {
                let tree = random_valid_tree(&mut rng);
                let violations = tree.verify();
                assert!(violations.is_empty(), "tree {i}: {violations:?}");
            }
        }),
        clause("7b verifier rejects injected violations of each invariant class", || {
            let base = RawNode {
                id: "a".into(),
                event_type: EventType::TaskStart,
                start: 0.0,
                end: Some(10.0),
                status: NodeStatus::Completed,
                metadata: Map::new(),
                parent: None,
            };
            // Temporal: child escapes the parent span.
            let temporal = vec![
                base.clone(),
                RawNode { id: "b".into(), start: 5.0, end: Some(20.0), parent: Some("a".into()), ..base.clone() },
            ];
            assert!(verify_raw(&temporal)
                .iter()
                .any(|v| matches!(v, InvariantViolation::TemporalInconsistency { .. })));
            // Status propagation: failed child under completed parent.
            let status = vec![
                base.clone(),
                RawNode {
                    id: "c".into(),
                    start: 1.0,
                    end: Some(2.0),
                    status: NodeStatus::Failed,
                    parent: Some("a".into()),
                    ..base.clone()
                },
            ];
            assert!(verify_raw(&status)
                .iter()
                .any(|v| matches!(v, InvariantViolation::StatusPropagation { .. })));
            // Uniqueness: duplicate id.
            let dup = vec![base.clone(), base.clone()];
            assert!(verify_raw(&dup)
                .iter()
                .any(|v| matches!(v, InvariantViolation::DuplicateId(_))));
        }),
        clause("7c parallel efficiency never exceeds critical-path bound", || {
            let mut rng = DetRng::new(78);
            for _ in 0..200 {
                let tree = random_valid_tree(&mut rng);
                let m = metrics(&tree).unwrap();
                let (_, l_crit) = critical_path(&tree);
                if m.t_total > 0.0 {
                    let bound = l_crit / m.t_total;
                    assert!(
                        m.parallel_efficiency <= bound + 1e-9,
                        "eta {} > bound {}",
                        m.parallel_efficiency,
                        bound
                    );
                }
            }
        }),
        clause("7d CSV header is bit-exact", || {
            assert_eq!(CSV_HEADER, "event_id,type,start_time,end_time,duration_ms,status,parent_id");
            let mut rng = DetRng::new(79);
            let tree = random_valid_tree(&mut rng);
            let csv = export_csv(&tree);
            assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
            assert_eq!(csv.lines().count(), tree.len() + 1);
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Criterion 8: GPU planning
// -------------------------------------------------------------------------

#[test]
fn criterion_08_gpu_planning() {
    fn device(index: usize, available: u64, node: u32) -> DeviceSnapshot {
        DeviceSnapshot {
            index,
            total_mem: available * 2,
            used_mem: available,
            util_pct: 10.0,
            power: 100.0,
            power_max: 400.0,
            temp: 50.0,
            node_id: node,
        }
    }
    let results = vec![
        clause("8a pipeline_efficiency(8,4) = 8/11 within 1e-12", || {
            assert!((pipeline_efficiency(8, 4) - 8.0 / 11.0).abs() < 1e-12);
        }),
        clause("8b estimate_mem substitution example is exactly 7e9 bytes", || {
            let spec = ModelSpec {
                params: 1_000_000_000,
                precision_bits: 8,
                seq_len: 1,
                batch: 1,
                training: false,
                layers: 16,
            };
            assert_eq!(estimate_mem(&spec), 7_000_000_000);
        }),
        clause("8c parallelism selection matches the branch table (6 regimes)", || {
            let mem = 8_000_000_000u64;
            let devices: Vec<DeviceSnapshot> =
                (0..16).map(|i| device(i, mem, (i / 2) as u32)).collect();
            let base = ModelSpec { params: 1, precision_bits: 8, seq_len: 1, batch: 1, training: false, layers: 16 };
            let sized = |bytes: u64| ModelSpec { params: bytes / 7, ..base };

            let plan = select_parallelism(&sized(mem / 2), &devices, false).unwrap();
            assert_eq!(plan.strategy, ParallelismStrategy::Single);

            let plan = select_parallelism(&sized(mem / 2), &devices, true).unwrap();
            assert!(matches!(plan.strategy, ParallelismStrategy::DataParallel { .. }));

            let plan = select_parallelism(&sized(mem * 3 / 2), &devices, false).unwrap();
            assert_eq!(plan.strategy, ParallelismStrategy::TensorParallel { degree: 2 });

            let plan = select_parallelism(&sized(mem * 7 / 2), &devices, false).unwrap();
            assert_eq!(plan.strategy, ParallelismStrategy::PipelineParallel { stages: 4 });

            let mut odd = sized(mem * 7 / 2);
            odd.layers = 15;
            let plan = select_parallelism(&odd, &devices, false).unwrap();
            assert_eq!(plan.strategy, ParallelismStrategy::TensorParallel { degree: 4 });

            let plan = select_parallelism(&sized(mem * 6), &devices, false).unwrap();
            assert_eq!(plan.strategy, ParallelismStrategy::TensorParallel { degree: 6 });

            let plan = select_parallelism(&sized(mem * 12), &devices, false).unwrap();
            assert_eq!(
                plan.strategy,
                ParallelismStrategy::Hybrid { tensor_degree: 8, pipeline_stages: 2 }
            );
        }),
        clause("8d alert classification truth table at 0.95/85/0.95 and 0.85/75/0.85", || {
            let mut d = device(0, 50, 0);
            d.total_mem = 100;
            let cases: Vec<(f64, f64, f64, AlertLevel)> = vec![
                (0.50, 50.0, 0.50, AlertLevel::None),
                (0.96, 50.0, 0.50, AlertLevel::Critical),
                (0.90, 50.0, 0.50, AlertLevel::Warning),
                (0.50, 86.0, 0.50, AlertLevel::Critical),
                (0.50, 80.0, 0.50, AlertLevel::Warning),
                (0.50, 50.0, 0.96, AlertLevel::Critical),
                (0.50, 50.0, 0.90, AlertLevel::Warning),
                (0.90, 80.0, 0.90, AlertLevel::Warning),
                (0.96, 86.0, 0.96, AlertLevel::Critical),
            ];
            for (mem_frac, temp, power_frac, expected) in cases {
                d.used_mem = (mem_frac * 100.0).round() as u64;
                d.temp = temp;
                d.power = power_frac * d.power_max;
                assert_eq!(classify_alert(&d), expected, "({mem_frac}, {temp}, {power_frac})");
            }
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Criterion 9: end-to-end with the scripted backend
// -------------------------------------------------------------------------

fn calculator_turn(expr: &str) -> String {
    format!("Thought: continue.\nAction: calculator\nAction Input: {{\"expression\": \"{expr}\"}}")
}

#[test]
fn criterion_09_end_to_end() {
    let results = vec![
        clause("9a four-tool-call trace ends at $954.25 with results 2697, 2912.76, 2862.76, 954.25", || {
            let backend = ScriptedBackend::new("scripted")
                .expect_contains("Task:", calculator_turn("3 * 899"))
                .expect_contains("\"result\":2697", calculator_turn("2697 * 1.08"))
                .expect_contains("\"result\":2912.76", calculator_turn("2912.76 - 50"))
                .expect_contains("\"result\":2862.76", calculator_turn("2862.76 / 3"))
                .expect_contains(
                    "954.25",
                    "Thought: done.\nFinal Answer: The total cost for 3 laptops with 8% sales tax is \
                     $2,912.76. After applying the $50 group discount, the total becomes $2,862.76. \
                     The per-laptop cost is $954.25.",
                );
            let backend = Arc::new(backend);
            let agent = Agent::builder(backend.clone())
                .with_tools(Arc::new(ToolRegistry::with_builtins(vec![])))
                .build();
            let response = agent.run(CASE_STUDY_1, None).unwrap();
            assert!(response.content.contains("$954.25"));
            assert_eq!(response.metadata["routing_strategy"], "SINGLE");
            assert_eq!(response.tool_calls.len(), 4);
            let formatted: Vec<String> = response
                .tool_calls
                .iter()
                .map(|c| {
                    serde_json::from_str::<Value>(&c.observation).unwrap()["formatted"]
                        .as_str()
                        .unwrap()
                        .to_string()
                })
                .collect();
            assert_eq!(formatted, ["2697", "2912.76", "2862.76", "954.25"]);
            // The complexity score was computed without any model call: the
            // first prompt the backend ever saw was already the reasoning
            // prompt for the (post-analysis) single-agent path.
            assert!(backend.calls()[0].contains("Task:"));
            assert!((response.metadata["complexity_score"].as_f64().unwrap() - 5.0).abs() < 0.01);
            assert!(response.tree.verify().is_empty());
        }),
        clause("9b C >= tau query runs HYBRID with partial-failure synthesis", || {
            let decomposition = r#"{"subtasks": [
                {"id": "st_1", "description": "collect alpha figures", "depends_on": []},
                {"id": "st_2", "description": "collect beta figures", "depends_on": []},
                {"id": "st_3", "description": "combine collected figures", "depends_on": ["st_1", "st_2"]}
            ]}"#;
            let backend = ScriptedBackend::new("scripted")
                .expect_contains("task decomposition expert", decomposition)
                .expect_contains("collect alpha figures", "Final Answer: alpha ready")
                .expect_contains("collect beta figures", "nonsense")
                .expect_contains("collect beta figures", "nonsense")
                .expect_contains("collect beta figures", "nonsense")
                .expect_contains("collect beta figures", "nonsense")
                .expect_contains("collect beta figures", "nonsense")
                .expect_contains("combine collected figures", "Final Answer: combined")
                .expect_contains("Failed subtasks", "partial answer with caveats about st_2");
            let agent = Agent::builder(Arc::new(backend))
                .with_tools(Arc::new(ToolRegistry::with_builtins(vec![])))
                .build();
            let response = agent.run(COMPLEX_QUERY, None).unwrap();
            assert_eq!(response.metadata["routing_strategy"], "HYBRID");
            assert_eq!(response.metadata["num_subtasks"], json!(3));
            assert_eq!(response.metadata["failed_subtasks"], json!(["st_2"]));
            assert!(response.content.contains("caveats"));
            assert!(response.tree.verify().is_empty());
        }),
        clause("9c decomposition parse failure falls back to single-agent with metadata", || {
            let backend = ScriptedBackend::new("scripted")
                .expect_contains("task decomposition expert", "no json here at all")
                .expect_contains("task decomposition expert", "still no json")
                .expect_contains("Task:", "Final Answer: single-agent fallback answer");
            let agent = Agent::builder(Arc::new(backend))
                .with_tools(Arc::new(ToolRegistry::with_builtins(vec![])))
                .build();
            let response = agent.run(COMPLEX_QUERY, None).unwrap();
            assert_eq!(response.metadata["fallback"], json!(true));
            assert_eq!(response.metadata["routing_strategy"], "SINGLE");
            assert_eq!(response.content, "single-agent fallback answer");
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Criterion 10: configuration
// -------------------------------------------------------------------------

#[test]
fn criterion_10_config() {
    let results = vec![
        clause("10a weight sum 0.95 yields the validation error", || {
            let schema = SchemaSpec::builtin();
            let doc = ConfigDocument::from_value(json!({
                "complexity": {"weights": {
                    "task_length": 0.10,
                    "requirement_count": 0.25,
                    "domain_breadth": 0.20,
                    "tool_requirements": 0.20,
                    "reasoning_depth": 0.20
                }}
            }));
            let report = validate(&doc, &schema);
            assert!(report
                .errors
                .iter()
                .any(|(_, m)| m.contains("weights must sum to 1.0") && m.contains("0.95")));
        }),
        clause("10b env substitution examples", || {
            let empty = BTreeMap::new();
            assert_eq!(substitute_env("${MODEL_NAME:base}", &empty).unwrap(), "base");
            assert_eq!(substitute_env("no markers here", &empty).unwrap(), "no markers here");
            let env: BTreeMap<String, String> = [("A".to_string(), "1".to_string())].into();
            assert_eq!(substitute_env("${A}-${B:x}", &env).unwrap(), "1-x");
            assert!(substitute_env("${UNSET_NO_DEFAULT}", &empty).is_err());
        }),
        clause("10c merge examples", || {
            let base = ConfigDocument::from_value(json!({"a": 1}));
            assert_eq!(merge(&base, &ConfigDocument::empty()).tree, json!({"a": 1}));
            let base = ConfigDocument::from_value(json!({"m": {"x": 1, "y": 2}}));
            let over = ConfigDocument::from_value(json!({"m": {"y": 3}}));
            assert_eq!(merge(&base, &over).tree, json!({"m": {"x": 1, "y": 3}}));
            let base = ConfigDocument::from_value(json!({"tools": [{"name": "calc"}]}));
            let over = ConfigDocument::from_value(json!({"tools": [{"name": "search"}]}));
            assert_eq!(merge(&base, &over).tree, json!({"tools": [{"name": "search"}]}));
        }),
        clause("10d hot reload preserves memory entries across a threshold change", || {
            let backend = Arc::new(
                ScriptedBackend::new("scripted").expect_contains("Task:", "Final Answer: noted"),
            );
            let agent = Agent::builder(backend).build();
            // Seed long-term memory directly and through a run.
            {
                let memory = agent.memory();
                let mut memory = memory.lock().unwrap();
                for i in 0..5 {
                    memory.long_term.insert(MemoryEntry::new(
                        format!("durable fact {i}"),
                        EntryType::Fact,
                        ImportanceLevel::High,
                        i as f64,
                    ));
                }
            }
            agent.run("Remember the project deadline.", None).unwrap();
            let entries_before = agent.memory().lock().unwrap().long_term.len();
            let short_before = agent.memory().lock().unwrap().short_term.len();
            assert_eq!(agent.config().thresholds.tau, 7.0);

            let doc = ConfigDocument::from_value(json!({"complexity": {"threshold": 6.5}}));
            let reloaded = agent.hot_reload(&doc, None).unwrap();
            assert_eq!(reloaded.config().thresholds.tau, 6.5);
            assert_eq!(reloaded.memory().lock().unwrap().long_term.len(), entries_before);
            assert_eq!(reloaded.memory().lock().unwrap().short_term.len(), short_before);

            // Invalid document: refused, nothing changes.
            let bad = ConfigDocument::from_value(json!({
                "model": {"generation_config": {"temperature": 9.9}}
            }));
            assert!(agent.hot_reload(&bad, None).is_err());
            assert_eq!(agent.config().thresholds.tau, 7.0);

            // Identical reload is a fixed point for the swap-relevant knobs.
            let same = agent.hot_reload(&ConfigDocument::empty(), None).unwrap();
            assert_eq!(same.config().thresholds.tau, agent.config().thresholds.tau);
            assert_eq!(same.backend_name(), agent.backend_name());
        }),
        clause("10e defaults injected after the final merge", || {
            let schema = SchemaSpec::builtin();
            let fragment = ConfigDocument::from_value(json!({"complexity": {"threshold": 6.0}}));
            let effective = apply_defaults(&merge(&ConfigDocument::empty(), &fragment), &schema);
            assert_eq!(effective.get_f64("complexity.threshold"), Some(6.0));
            assert_eq!(effective.get_f64("complexity.hierarchical_threshold"), Some(8.5));
        }),
    ];
    finish(results);
}

// -------------------------------------------------------------------------
// Cross-module sanity used by several criteria
// -------------------------------------------------------------------------

#[test]
fn supporting_invariants() {
    let results = vec![
        clause("S1 chain conditions evaluate the documented examples", || {
            let mut state = ChainState::default();
            state.variables.insert("quality_score".into(), json!(0.9));
            assert!(evaluate_condition("quality_score >= 0.8", &state).unwrap());
            assert!(evaluate_condition("iteration_count < 3", &state).unwrap());
            assert!(!evaluate_condition("true and false", &state).unwrap());
        }),
        clause("S2 decomposition parser enforces DAG structure", || {
            let cyclic = r#"{"subtasks": [
                {"id": "a", "description": "x", "depends_on": ["b"]},
                {"id": "b", "description": "y", "depends_on": ["a"]}
            ]}"#;
            assert!(parse_decomposition(cyclic, Strategy::Hybrid).is_err());
        }),
        clause("S3 hash embedder is deterministic and recall round-trips", || {
            let mut system = MemorySystem::new(ShortTermConfig::default());
            let note = format!("the deadline is friday {}", vec!["detail"; 60].join(" "));
            system.observe(Role::User, &note, 100.0);
            assert_eq!(system.consolidate(), 1);
            let found = system.recall("deadline friday", 3, 200.0);
            assert_eq!(found.len(), 1);
            let e = kestrel::memory::HashEmbedder::default();
            use kestrel::memory::Embedder;
            assert_eq!(e.embed("same text"), e.embed("same text"));
            assert!(cosine(&e.embed("alpha"), &e.embed("alpha")) > 0.999);
        }),
    ];
    finish(results);
}
