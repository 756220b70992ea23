//! Web search with a 5-minute-bucketed result cache, a sliding-window rate
//! limiter per engine, exponential backoff on client failures, and
//! single-flight deduplication of identical in-flight queries.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{ParamSpec, ParamType, Tool, ToolCategory, ToolMetadata, ToolResult};
use crate::util::{fnv1a64, Sleeper, ThreadSleeper};

/// Maximum client calls per engine inside any rolling 60-second window.
pub const RATE_LIMIT_PER_MINUTE: usize = 10;
/// Cache-bucket width in seconds.
pub const CACHE_BUCKET_SECS: f64 = 300.0;
const MAX_BACKOFF_RETRIES: u32 = 3;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SearchClientError {
    #[error("search engine rate limited the request")]
    RateLimited,
    #[error("search client failed: {0}")]
    Failed(String),
}

/// One search hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub url: String,
    pub snippet: String,
}

/// Pluggable HTTP client behind the tool; tests inject fixtures.
pub trait SearchClient: Send + Sync {
    fn search(&self, engine: &str, query: &str) -> Result<Vec<SearchResult>, SearchClientError>;
}

/// Canned results plus a call counter, for tests and examples.
#[derive(Default)]
pub struct FixtureSearchClient {
    results: Mutex<BTreeMap<String, Vec<SearchResult>>>,
    failures_before_success: Mutex<u32>,
    calls: Mutex<u64>,
}

impl FixtureSearchClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_results(self, query: &str, results: Vec<SearchResult>) -> Self {
        self.results.lock().unwrap().insert(query.to_string(), results);
        self
    }

    /// Make the first `n` calls fail with a rate-limit error.
    pub fn failing_first(self, n: u32) -> Self {
        *self.failures_before_success.lock().unwrap() = n;
        self
    }

    pub fn calls(&self) -> u64 {
        *self.calls.lock().unwrap()
    }
}

impl SearchClient for FixtureSearchClient {
    fn search(&self, _engine: &str, query: &str) -> Result<Vec<SearchResult>, SearchClientError> {
        *self.calls.lock().unwrap() += 1;
        {
            let mut failures = self.failures_before_success.lock().unwrap();
            if *failures > 0 {
                *failures -= 1;
                return Err(SearchClientError::RateLimited);
            }
        }
        Ok(self.results.lock().unwrap().get(query).cloned().unwrap_or_else(|| {
            vec![SearchResult {
                title: format!("Result for {query}"),
                url: format!("https://example.org/{}", query.replace(' ', "-")),
                snippet: format!("A snippet about {query}."),
            }]
        }))
    }
}

/// Output verbosity: urls only, `title: url`, or title + snippet + url.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verbosity {
    Minimal,
    Standard,
    Detailed,
}

impl Verbosity {
    fn label(self) -> &'static str {
        match self {
            Verbosity::Minimal => "MINIMAL",
            Verbosity::Standard => "STANDARD",
            Verbosity::Detailed => "DETAILED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_uppercase().as_str() {
            "MINIMAL" => Some(Self::Minimal),
            "STANDARD" => Some(Self::Standard),
            "DETAILED" => Some(Self::Detailed),
            _ => None,
        }
    }
}

/// Format results for model consumption at the requested verbosity.
pub fn format_results(results: &[SearchResult], verbosity: Verbosity) -> String {
    match verbosity {
        Verbosity::Minimal => results.iter().map(|r| r.url.clone()).collect::<Vec<_>>().join("\n"),
        Verbosity::Standard => results
            .iter()
            .map(|r| format!("{}: {}", r.title, r.url))
            .collect::<Vec<_>>()
            .join("\n"),
        Verbosity::Detailed => results
            .iter()
            .map(|r| format!("{}\n{}\n{}", r.title, r.snippet, r.url))
            .collect::<Vec<_>>()
            .join("\n\n"),
    }
}

/// Cache key: engine, query, verbosity, and the 300-second time bucket.
pub fn cache_key(engine: &str, query: &str, verbosity: Verbosity, now: f64) -> u64 {
    let bucket = (now / CACHE_BUCKET_SECS).floor() as i64;
    fnv1a64(format!("{engine}\u{1}{query}\u{1}{}\u{1}{bucket}", verbosity.label()).as_bytes())
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SearchError {
    #[error("rate limit: more than {RATE_LIMIT_PER_MINUTE} searches per minute on `{0}`")]
    Throttled(String),
    #[error("search failed after {MAX_BACKOFF_RETRIES} retries: {0}")]
    Exhausted(String),
}

struct Flight {
    done: Mutex<Option<Result<String, String>>>,
    cv: Condvar,
}

#[derive(Default)]
struct SearchState {
    cache: HashMap<u64, String>,
    window: HashMap<String, VecDeque<f64>>,
    inflight: HashMap<u64, Arc<Flight>>,
}

/// Web search as a tool.
pub struct WebSearchTool {
    metadata: ToolMetadata,
    client: Arc<dyn SearchClient>,
    sleeper: Arc<dyn Sleeper>,
    state: Mutex<SearchState>,
}

impl WebSearchTool {
    pub fn new(client: Arc<dyn SearchClient>) -> Self {
        Self {
            metadata: ToolMetadata {
                name: "web_search".to_string(),
                description: "Search the web and return formatted results".to_string(),
                category: ToolCategory::InformationRetrieval,
                params: vec![
                    ParamSpec::required("query", ParamType::String),
                    ParamSpec::optional("engine", ParamType::String, Some(json!("duckduckgo"))),
                    ParamSpec::optional("verbosity", ParamType::String, Some(json!("STANDARD"))),
                ],
                version: "1.0.0".to_string(),
                cost_estimate: 0.5,
                default_timeout: 30.0,
                extra: BTreeMap::new(),
            },
            client,
            sleeper: Arc::new(ThreadSleeper),
            state: Mutex::new(SearchState::default()),
        }
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    /// Run a search. Cache hits return without touching the client; the
    /// 11th client call in a rolling minute per engine is refused; transient
    /// client failures back off 2s/4s/8s before giving up; identical
    /// concurrent queries trigger exactly one client call.
    pub fn search(
        &self,
        engine: &str,
        query: &str,
        verbosity: Verbosity,
        now: f64,
    ) -> Result<String, SearchError> {
        let key = cache_key(engine, query, verbosity, now);
        // Fast path / admission, under the lock.
        let existing_flight = {
            let mut state = self.state.lock().unwrap();
            if let Some(hit) = state.cache.get(&key) {
                return Ok(hit.clone());
            }
            match state.inflight.get(&key) {
                Some(flight) => flight.clone(),
                None => {
                    let window = state.window.entry(engine.to_string()).or_default();
                    while window.front().map(|t| now - t >= 60.0).unwrap_or(false) {
                        window.pop_front();
                    }
                    if window.len() >= RATE_LIMIT_PER_MINUTE {
                        return Err(SearchError::Throttled(engine.to_string()));
                    }
                    window.push_back(now);
                    let flight = Arc::new(Flight { done: Mutex::new(None), cv: Condvar::new() });
                    state.inflight.insert(key, flight.clone());
                    // This thread is the leader for `key`.
                    drop(state);
                    return self.lead_fetch(engine, query, verbosity, key, flight);
                }
            }
        };
        // Follower: wait for the leader to finish and share its outcome.
        let mut done = existing_flight.done.lock().unwrap();
        while done.is_none() {
            done = existing_flight.cv.wait(done).unwrap();
        }
        match done.clone().unwrap() {
            Ok(formatted) => Ok(formatted),
            Err(e) => Err(SearchError::Exhausted(e)),
        }
    }

    fn lead_fetch(
        &self,
        engine: &str,
        query: &str,
        verbosity: Verbosity,
        key: u64,
        flight: Arc<Flight>,
    ) -> Result<String, SearchError> {
        let mut outcome: Result<String, String> = Err("no attempt".to_string());
        for attempt in 0..=MAX_BACKOFF_RETRIES {
            match self.client.search(engine, query) {
                Ok(results) => {
                    outcome = Ok(format_results(&results, verbosity));
                    break;
                }
                Err(e) => {
                    outcome = Err(e.to_string());
                    if attempt < MAX_BACKOFF_RETRIES {
                        self.sleeper.sleep(2f64.powi(attempt as i32 + 1));
                    }
                }
            }
        }
        let mut state = self.state.lock().unwrap();
        if let Ok(formatted) = &outcome {
            state.cache.insert(key, formatted.clone());
        }
        state.inflight.remove(&key);
        drop(state);
        *flight.done.lock().unwrap() = Some(outcome.clone());
        flight.cv.notify_all();
        outcome.map_err(SearchError::Exhausted)
    }
}

impl Tool for WebSearchTool {
    fn metadata(&self) -> &ToolMetadata {
        &self.metadata
    }

    fn execute(&self, args: &Map<String, Value>) -> ToolResult {
        let query = match args.get("query").and_then(Value::as_str) {
            Some(q) => q,
            None => return ToolResult::failure("INVALID_INPUT", "missing query", false),
        };
        let engine = args.get("engine").and_then(Value::as_str).unwrap_or("duckduckgo");
        let verbosity = args
            .get("verbosity")
            .and_then(Value::as_str)
            .and_then(Verbosity::parse)
            .unwrap_or(Verbosity::Standard);
        use crate::util::Clock;
        let now = crate::util::SystemClock.now();
        match self.search(engine, query, verbosity, now) {
            Ok(formatted) => ToolResult::success(json!({"results": formatted})),
            Err(SearchError::Throttled(e)) => {
                ToolResult::failure("RATE_LIMITED", format!("engine `{e}` throttled"), true)
            }
            Err(SearchError::Exhausted(e)) => ToolResult::failure("SEARCH_FAILED", e, true),
        }
    }
}
