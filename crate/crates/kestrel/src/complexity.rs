//! Pre-execution complexity analysis and routing.
//!
//! Scores a query on five weighted factors (task length, requirement count,
//! domain breadth, tool requirements, reasoning depth), combines them into a
//! single score in `[0, 10]`, and picks an execution strategy before any
//! model call is made. Everything here is a pure function of the query and
//! the keyword tables.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::lower_tokens;

/// Default factor weights: requirement count dominates, task length matters
/// least.
pub const DEFAULT_WEIGHTS: FactorWeights = FactorWeights {
    task_length: 0.15,
    requirement_count: 0.25,
    domain_breadth: 0.20,
    tool_requirements: 0.20,
    reasoning_depth: 0.20,
};

/// Complexity score above which a task is decomposed.
pub const DEFAULT_TAU: f64 = 7.0;
/// Complexity score above which manager-worker coordination is used.
pub const DEFAULT_TAU_H: f64 = 8.5;

#[derive(Debug, Error)]
pub enum ComplexityError {
    #[error("factor weights must each lie in [0,1] and sum to 1.0 (got {sum})")]
    BadWeights { sum: f64 },
    #[error("keyword tables must define exactly 8 domains, 8 tool categories, and 4 reasoning levels (got {domains}/{tools}/{reasoning})")]
    BadTables { domains: usize, tools: usize, reasoning: usize },
    #[error("routing thresholds must satisfy 0 < tau < tau_h <= 10 (got tau={tau}, tau_h={tau_h})")]
    BadThresholds { tau: f64, tau_h: f64 },
    #[error("failed to parse keyword tables: {0}")]
    Parse(String),
}

/// Weights for the five complexity factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorWeights {
    pub task_length: f64,
    pub requirement_count: f64,
    pub domain_breadth: f64,
    pub tool_requirements: f64,
    pub reasoning_depth: f64,
}

impl FactorWeights {
    pub fn validate(&self) -> Result<(), ComplexityError> {
        let parts = [
            self.task_length,
            self.requirement_count,
            self.domain_breadth,
            self.tool_requirements,
            self.reasoning_depth,
        ];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 0.01 {
            return Err(ComplexityError::BadWeights { sum });
        }
        Ok(())
    }
}

impl Default for FactorWeights {
    fn default() -> Self {
        DEFAULT_WEIGHTS
    }
}

/// Per-factor scores, each in `[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    pub task_length: f64,
    pub requirement_count: f64,
    pub domain_breadth: f64,
    pub tool_requirements: f64,
    pub reasoning_depth: f64,
}

impl FactorScores {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.task_length,
            self.requirement_count,
            self.domain_breadth,
            self.tool_requirements,
            self.reasoning_depth,
        ]
    }
}

/// Execution strategy selected by the router.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    Single,
    Parallel,
    Sequential,
    Hierarchical,
    Hybrid,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::Single => "SINGLE",
            Strategy::Parallel => "PARALLEL",
            Strategy::Sequential => "SEQUENTIAL",
            Strategy::Hierarchical => "HIERARCHICAL",
            Strategy::Hybrid => "HYBRID",
        };
        f.write_str(s)
    }
}

/// A query together with its factor scores and weighted complexity score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskProfile {
    pub query: String,
    pub word_count: usize,
    pub factor_scores: FactorScores,
    pub score: f64,
    pub strategy: Option<Strategy>,
}

/// Thresholds for multi-agent (`tau`) and hierarchical (`tau_h`) routing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingThresholds {
    pub tau: f64,
    pub tau_h: f64,
}

impl RoutingThresholds {
    pub fn validate(&self) -> Result<(), ComplexityError> {
        if !(self.tau > 0.0 && self.tau < self.tau_h && self.tau_h <= 10.0) {
            return Err(ComplexityError::BadThresholds { tau: self.tau, tau_h: self.tau_h });
        }
        Ok(())
    }
}

impl Default for RoutingThresholds {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, tau_h: DEFAULT_TAU_H }
    }
}

/// Shape of a query's inter-component dependencies, as reported by a
/// dependency probe (either a decomposer pass or a cheap heuristic).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DependencySummary {
    /// No dependencies between components.
    Independent,
    /// Dependencies form a single linear chain.
    LinearChain,
    /// Anything else: a general DAG.
    Mixed,
}

/// One reasoning level with its score and indicator phrases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningLevel {
    pub score: f64,
    pub indicators: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawTables {
    domains: BTreeMap<String, Vec<String>>,
    tools: BTreeMap<String, Vec<String>>,
    reasoning: BTreeMap<String, ReasoningLevel>,
    requirement_verbs: Vec<String>,
}

/// Keyword tables backing the domain, tool, and reasoning factors.
#[derive(Debug, Clone)]
pub struct KeywordTables {
    pub domains: BTreeMap<String, Vec<String>>,
    pub tools: BTreeMap<String, Vec<String>>,
    /// Ordered from most to least complex; precedence goes to the first hit.
    pub reasoning: Vec<(String, ReasoningLevel)>,
    pub requirement_verbs: Vec<String>,
}

impl KeywordTables {
    /// The built-in default tables.
    pub fn builtin() -> Self {
        Self::from_yaml_str(include_str!("../data/keywords.yaml"))
            .expect("bundled keyword tables are valid")
    }

    /// Load tables from a YAML document mirroring the bundled file layout.
    pub fn from_yaml_str(text: &str) -> Result<Self, ComplexityError> {
        let raw: RawTables =
            serde_yaml::from_str(text).map_err(|e| ComplexityError::Parse(e.to_string()))?;
        // Order reasoning levels by descending score so precedence is a plain scan.
        let mut reasoning: Vec<(String, ReasoningLevel)> = raw.reasoning.into_iter().collect();
        reasoning.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));
        let tables = Self {
            domains: raw.domains,
            tools: raw.tools,
            reasoning,
            requirement_verbs: raw.requirement_verbs,
        };
        tables.validate()?;
        Ok(tables)
    }

    pub fn validate(&self) -> Result<(), ComplexityError> {
        if self.domains.len() != 8 || self.tools.len() != 8 || self.reasoning.len() != 4 {
            return Err(ComplexityError::BadTables {
                domains: self.domains.len(),
                tools: self.tools.len(),
                reasoning: self.reasoning.len(),
            });
        }
        Ok(())
    }
}

/// Piecewise mapping from word count to the task-length factor.
/// Boundary values fall into the higher bucket (20 words scores 4.0).
pub fn score_task_length(word_count: usize) -> f64 {
    match word_count {
        0..=19 => 2.0,
        20..=49 => 4.0,
        50..=99 => 6.0,
        100..=199 => 8.0,
        _ => 10.0,
    }
}

/// Count structural requirement markers and map to a factor score.
///
/// Markers: question marks, semicolons, commas (a comma directly followed by
/// "and"/"or" merges with it into one marker), the sequencing words "then"
/// and "after", bare "and"/"or" that introduce an action verb, numbered items
/// ("(1)", "1.", "1)"), and bullet lines. When two or more numbered items are
/// present, commas and semicolons inside the list are not additionally
/// counted. The score is `min(10, 2 * n_req)`.
pub fn count_requirements(query: &str, requirement_verbs: &[String]) -> (usize, f64) {
    let numbered_re = Regex::new(r"^(\(\d+\)|\d+[.)])$").unwrap();
    let raw_tokens: Vec<&str> = query.split_whitespace().collect();
    let trimmed: Vec<String> = raw_tokens
        .iter()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .collect();

    let mut questions = 0usize;
    let mut semicolons = 0usize;
    let mut commas = 0usize;
    let mut sequencers = 0usize;
    let mut conjunctions = 0usize;
    let mut numbered = 0usize;
    let mut consumed_by_comma = vec![false; raw_tokens.len()];

    for (i, raw) in raw_tokens.iter().enumerate() {
        questions += raw.matches('?').count();
        semicolons += raw.matches(';').count();

        let marker = raw.trim_end_matches([',', ';', ':']);
        if numbered_re.is_match(marker) {
            numbered += 1;
        }

        let comma_count = raw.matches(',').count();
        if comma_count > 0 {
            let next_is_conj = trimmed
                .get(i + 1)
                .map(|t| t == "and" || t == "or")
                .unwrap_or(false);
            if raw.ends_with(',') && next_is_conj {
                // List comma: ", and" is one marker, not two.
                consumed_by_comma[i + 1] = true;
                commas += comma_count;
            } else {
                commas += comma_count;
            }
        }
    }

    for (i, tok) in trimmed.iter().enumerate() {
        match tok.as_str() {
            "then" | "after" => sequencers += 1,
            "and" | "or" if !consumed_by_comma[i] => {
                let introduces_action = trimmed
                    .get(i + 1)
                    .map(|next| requirement_verbs.iter().any(|v| v == next))
                    .unwrap_or(false);
                if introduces_action {
                    conjunctions += 1;
                }
            }
            _ => {}
        }
    }

    let mut bullets = 0usize;
    for line in query.lines() {
        let l = line.trim_start();
        if l.starts_with("- ") || l.starts_with("* ") || l.starts_with("\u{2022} ") {
            bullets += 1;
        }
    }

    let list_separators = if numbered >= 2 { 0 } else { commas + semicolons };
    let n_req = questions + list_separators + sequencers + conjunctions + numbered + bullets;
    (n_req, (2.0 * n_req as f64).min(10.0))
}

/// `min(10, multiplier * categories_hit)` where a category is hit when at
/// least one of its keywords appears in the query as a lowercase word token
/// (multi-word keywords match as contiguous token phrases).
pub fn score_keyword_breadth(
    query: &str,
    table: &BTreeMap<String, Vec<String>>,
    multiplier: f64,
) -> f64 {
    let tokens = lower_tokens(query);
    let hits = table
        .values()
        .filter(|keywords| keywords.iter().any(|k| phrase_present(&tokens, k)))
        .count();
    (multiplier * hits as f64).min(10.0)
}

fn phrase_present(tokens: &[String], keyword: &str) -> bool {
    let parts: Vec<&str> = keyword.split_whitespace().collect();
    match parts.len() {
        0 => false,
        1 => tokens.iter().any(|t| t == parts[0]),
        n => tokens.windows(n).any(|w| w.iter().zip(&parts).all(|(t, p)| t == p)),
    }
}

/// Analyzer bundling weights and keyword tables.
#[derive(Debug, Clone)]
pub struct ComplexityAnalyzer {
    pub weights: FactorWeights,
    pub tables: KeywordTables,
}

impl Default for ComplexityAnalyzer {
    fn default() -> Self {
        Self { weights: DEFAULT_WEIGHTS, tables: KeywordTables::builtin() }
    }
}

impl ComplexityAnalyzer {
    pub fn new(weights: FactorWeights, tables: KeywordTables) -> Result<Self, ComplexityError> {
        weights.validate()?;
        tables.validate()?;
        Ok(Self { weights, tables })
    }

    /// Reasoning depth with precedence to the most complex matching level;
    /// 5.0 when nothing matches.
    pub fn score_reasoning_depth(&self, query: &str) -> f64 {
        let tokens = lower_tokens(query);
        for (_, level) in &self.tables.reasoning {
            if level.indicators.iter().any(|k| phrase_present(&tokens, k)) {
                return level.score;
            }
        }
        5.0
    }

    pub fn count_requirements(&self, query: &str) -> (usize, f64) {
        count_requirements(query, &self.tables.requirement_verbs)
    }

    /// Score all five factors and combine them. Pure; never touches a model.
    pub fn analyze(&self, query: &str) -> TaskProfile {
        let word_count = crate::util::word_count(query);
        let task_length = score_task_length(word_count);
        let (_, requirement_count) = self.count_requirements(query);
        let domain_breadth = score_keyword_breadth(query, &self.tables.domains, 2.5);
        let tool_requirements = score_keyword_breadth(query, &self.tables.tools, 2.5);
        let reasoning_depth = self.score_reasoning_depth(query);
        let factor_scores = FactorScores {
            task_length,
            requirement_count,
            domain_breadth,
            tool_requirements,
            reasoning_depth,
        };
        let w = &self.weights;
        let score = w.task_length * task_length
            + w.requirement_count * requirement_count
            + w.domain_breadth * domain_breadth
            + w.tool_requirements * tool_requirements
            + w.reasoning_depth * reasoning_depth;
        TaskProfile { query: query.to_string(), word_count, factor_scores, score, strategy: None }
    }
}

/// Select an execution strategy from a scored profile.
///
/// `dep_probe` is only invoked when the score reaches `tau`; below that the
/// query goes to a single agent without any dependency analysis.
pub fn route<F>(profile: &TaskProfile, thresholds: &RoutingThresholds, dep_probe: F) -> Strategy
where
    F: FnOnce() -> DependencySummary,
{
    if profile.score < thresholds.tau {
        return Strategy::Single;
    }
    let deps = dep_probe();
    if profile.score >= thresholds.tau_h {
        return Strategy::Hierarchical;
    }
    match deps {
        DependencySummary::Independent => Strategy::Parallel,
        DependencySummary::LinearChain => Strategy::Sequential,
        DependencySummary::Mixed => Strategy::Hybrid,
    }
}

/// Cheap textual dependency probe: sequencing connectives suggest a chain,
/// their absence suggests independent components.
pub fn heuristic_dependency_probe(query: &str) -> DependencySummary {
    let lower = query.to_lowercase();
    let tokens = lower_tokens(query);
    let sequential = tokens.iter().any(|t| t == "then" || t == "after")
        || lower.contains("based on");
    let parallel_markers = tokens.iter().any(|t| t == "and" || t == "or");
    match (sequential, parallel_markers) {
        (true, true) => DependencySummary::Mixed,
        (true, false) => DependencySummary::LinearChain,
        (false, _) => DependencySummary::Independent,
    }
}
