//! Five-stage, model-size-aware prompt optimization.
//!
//! Stages run in a fixed order: pattern compression, sentence
//! simplification, redundancy removal, bullet formatting, and
//! sentence-boundary truncation. Which stages run depends on the target
//! model's size class; truncation always runs when the prompt is over the
//! size budget so the output token estimate never exceeds `max_prompt_tokens`.
//!
//! Token estimation in this module is characters divided by four, which is
//! what the truncation budget arithmetic assumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::lower_tokens;

#[derive(Debug, Error)]
pub enum PromptOptError {
    #[error("protected segments alone estimate to {needed} tokens, over the {budget}-token budget")]
    ProtectedOverflow { needed: usize, budget: usize },
    #[error("failed to parse pattern table: {0}")]
    Parse(String),
}

/// Model size classes by parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Tiny,
    Small,
    Medium,
    Large,
    Xl,
}

/// Optimization parameters for one size class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerProfile {
    pub size_class: SizeClass,
    pub max_prompt_tokens: usize,
    pub max_context_tokens: usize,
    pub few_shot: usize,
    pub chain_depth: usize,
    pub target_ratio: f64,
    pub enable_compression: bool,
    pub enable_simplification: bool,
    pub enable_redundancy: bool,
    pub enable_bullets: bool,
}

impl OptimizerProfile {
    /// Built-in per-size defaults. Smaller models get tighter budgets and
    /// more aggressive stages; XL keeps only redundancy removal on by
    /// default.
    pub fn for_size(size: SizeClass) -> Self {
        let (max_prompt_tokens, max_context_tokens, few_shot, chain_depth, target_ratio) =
            match size {
                SizeClass::Tiny => (512, 1024, 1, 2, 0.60),
                SizeClass::Small => (1024, 2048, 2, 3, 0.70),
                SizeClass::Medium => (2048, 4096, 3, 5, 0.80),
                SizeClass::Large => (4096, 8192, 5, 7, 0.85),
                SizeClass::Xl => (8192, 16384, 8, 10, 0.90),
            };
        let (enable_compression, enable_simplification, enable_bullets) = match size {
            SizeClass::Tiny | SizeClass::Small | SizeClass::Medium => (true, true, true),
            SizeClass::Large => (true, false, false),
            SizeClass::Xl => (false, false, false),
        };
        Self {
            size_class: size,
            max_prompt_tokens,
            max_context_tokens,
            few_shot,
            chain_depth,
            target_ratio,
            enable_compression,
            enable_simplification,
            enable_redundancy: true,
            enable_bullets,
        }
    }

    pub fn validate(&self) -> bool {
        self.max_prompt_tokens <= self.max_context_tokens
            && self.target_ratio > 0.0
            && self.target_ratio <= 1.0
    }
}

/// One compression pattern.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternEntry {
    pub pattern: String,
    /// Empty string means the phrase is removed outright.
    pub replacement: String,
    pub tokens_saved: u32,
}

/// Ordered pattern-replacement table.
#[derive(Debug, Clone)]
pub struct PatternTable {
    pub entries: Vec<PatternEntry>,
}

impl PatternTable {
    /// The 30 built-in patterns.
    pub fn builtin() -> Self {
        let table = Self::from_tsv_str(include_str!("../data/compression_patterns.tsv"))
            .expect("bundled pattern table is valid");
        debug_assert_eq!(table.entries.len(), 30);
        table
    }

    /// Parse a tab-separated `pattern<TAB>replacement<TAB>tokens_saved`
    /// table. Replacements must not reintroduce their own pattern.
    pub fn from_tsv_str(text: &str) -> Result<Self, PromptOptError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let pattern = cols
                .next()
                .filter(|p| !p.is_empty())
                .ok_or_else(|| PromptOptError::Parse(format!("line {}: no pattern", lineno + 1)))?
                .to_string();
            let replacement = cols.next().unwrap_or("").to_string();
            let tokens_saved = cols.next().and_then(|c| c.trim().parse().ok()).unwrap_or(0);
            if replacement.to_lowercase().contains(&pattern.to_lowercase()) {
                return Err(PromptOptError::Parse(format!(
                    "line {}: replacement reintroduces its pattern",
                    lineno + 1
                )));
            }
            entries.push(PatternEntry { pattern, replacement, tokens_saved });
        }
        Ok(Self { entries })
    }
}

/// Estimated token count: characters divided by four, rounded up.
pub fn est_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'\''
}

/// Case-insensitive whole-phrase replacement. Removal patterns (empty
/// replacement) also consume one adjacent space.
fn replace_phrase(text: &str, pattern: &str, replacement: &str) -> String {
    let tb = text.as_bytes();
    let pb = pattern.as_bytes();
    if pb.is_empty() || tb.len() < pb.len() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut copied = 0usize;
    let mut i = 0usize;
    while i + pb.len() <= tb.len() {
        let boundary_before = i == 0 || !is_word_byte(tb[i - 1]);
        let end = i + pb.len();
        let boundary_after = end == tb.len() || !is_word_byte(tb[end]);
        if boundary_before && boundary_after && tb[i..end].eq_ignore_ascii_case(pb) {
            out.push_str(&text[copied..i]);
            let mut next = end;
            if replacement.is_empty() {
                if next < tb.len() && tb[next] == b' ' {
                    next += 1;
                } else if out.ends_with(' ') {
                    out.pop();
                }
            } else {
                out.push_str(replacement);
            }
            copied = next;
            i = next;
        } else {
            i += 1;
        }
    }
    out.push_str(&text[copied..]);
    out
}

/// Stage 1: apply every pattern in table order, replacing all occurrences.
pub fn compress(text: &str, table: &PatternTable) -> String {
    let mut current = text.to_string();
    for entry in &table.entries {
        current = replace_phrase(&current, &entry.pattern, &entry.replacement);
    }
    current
}

/// Split text into sentences; terminators stay attached. A sentence ends at
/// '.', '!', or '?' followed by whitespace or end of input.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().map(|n| n.is_whitespace()).unwrap_or(true);
            if at_boundary {
                let s = current.trim();
                if !s.is_empty() {
                    sentences.push(s.to_string());
                }
                current.clear();
            }
        }
    }
    let tail = current.trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

const CONJUNCTIONS: [&str; 5] = ["and", "but", "or", "so", "because"];

fn is_bullet_line(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("- ") || t.starts_with("* ") || t.starts_with("\u{2022} ")
}

/// Walk a text paragraph by paragraph, passing prose runs through `f` while
/// leaving bullet lines untouched. Keeps the `\n\n` paragraph structure that
/// the bullet-formatting stage relies on.
fn map_prose(text: &str, mut f: impl FnMut(&str) -> String) -> String {
    let paragraphs: Vec<String> = text
        .split("\n\n")
        .map(|para| {
            let mut out_lines: Vec<String> = Vec::new();
            let mut prose: Vec<&str> = Vec::new();
            for line in para.lines() {
                if is_bullet_line(line) {
                    if !prose.is_empty() {
                        let processed = f(&prose.join(" "));
                        if !processed.is_empty() {
                            out_lines.push(processed);
                        }
                        prose.clear();
                    }
                    out_lines.push(line.to_string());
                } else {
                    prose.push(line);
                }
            }
            if !prose.is_empty() {
                let processed = f(&prose.join(" "));
                if !processed.is_empty() {
                    out_lines.push(processed);
                }
            }
            out_lines.join("\n")
        })
        .collect();
    paragraphs.join("\n\n")
}

/// Stage 2: split sentences longer than 20 words at the conjunction nearest
/// the midpoint, repeating until no splittable sentence remains. Bullet
/// lines pass through untouched.
pub fn simplify(text: &str) -> String {
    map_prose(text, simplify_prose)
}

fn simplify_prose(text: &str) -> String {
    let mut queue: Vec<String> = split_sentences(text);
    let mut out: Vec<String> = Vec::new();
    while !queue.is_empty() {
        let sentence = queue.remove(0);
        let words: Vec<&str> = sentence.split_whitespace().collect();
        if words.len() > 20 {
            let mid = words.len() as f64 / 2.0;
            let mut best: Option<(usize, f64)> = None;
            for (i, word) in words.iter().enumerate().skip(1) {
                let t = word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
                if CONJUNCTIONS.contains(&t.as_str()) {
                    let d = (i as f64 - mid).abs();
                    if best.map(|(_, bd)| d < bd).unwrap_or(true) {
                        best = Some((i, d));
                    }
                }
            }
            if let Some((j, _)) = best {
                queue.insert(0, words[j..].join(" "));
                queue.insert(0, format!("{}.", words[..j].join(" ")));
                continue;
            }
        }
        out.push(sentence);
    }
    out.join(" ")
}

const POLITENESS: [&str; 7] =
    ["please", "kindly", "if possible", "thank you", "i appreciate", "make sure to", "don't forget to"];

fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn shingles(sentence: &str) -> Vec<Vec<String>> {
    let tokens = lower_tokens(sentence);
    if tokens.is_empty() {
        return Vec::new();
    }
    if tokens.len() < 3 {
        return vec![tokens];
    }
    tokens.windows(3).map(|w| w.to_vec()).collect()
}

fn jaccard(a: &[Vec<String>], b: &[Vec<String>]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let set_a: std::collections::BTreeSet<&Vec<String>> = a.iter().collect();
    let set_b: std::collections::BTreeSet<&Vec<String>> = b.iter().collect();
    let inter = set_a.intersection(&set_b).count();
    let union = set_a.union(&set_b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Stage 3: drop politeness phrases and near-duplicate sentences (3-gram
/// shingle Jaccard above 0.8 against any earlier kept sentence). Duplicate
/// detection spans the whole text; bullet lines pass through untouched.
pub fn remove_redundancy(text: &str) -> String {
    let mut kept_shingles: Vec<Vec<Vec<String>>> = Vec::new();
    map_prose(text, |prose| {
        let mut kept: Vec<String> = Vec::new();
        for sentence in split_sentences(prose) {
            let lowered = sentence.to_lowercase();
            let starts_polite = POLITENESS.iter().any(|p| {
                lowered.starts_with(p)
                    && lowered.as_bytes().get(p.len()).map(|b| !is_word_byte(*b)).unwrap_or(true)
            });
            let mut cleaned = sentence.clone();
            for phrase in POLITENESS {
                cleaned = replace_phrase(&cleaned, phrase, "");
            }
            let cleaned = cleaned.trim_start_matches([' ', ',']).trim().to_string();
            if cleaned.is_empty() || cleaned.chars().all(|c| !c.is_alphanumeric()) {
                continue;
            }
            let cleaned = if starts_polite { capitalize_first(&cleaned) } else { cleaned };
            let sh = shingles(&cleaned);
            let duplicate = kept_shingles.iter().any(|prev| jaccard(prev, &sh) > 0.8);
            if !duplicate {
                kept.push(cleaned);
                kept_shingles.push(sh);
            }
        }
        kept.join(" ")
    })
}

const IMPERATIVE_VERBS: [&str; 30] = [
    "search", "analyze", "synthesize", "cite", "summarize", "create", "write", "find",
    "calculate", "compare", "research", "identify", "list", "generate", "provide", "gather",
    "review", "explain", "describe", "extract", "use", "include", "format", "return", "respond",
    "output", "collect", "build", "implement", "draft",
];
const SIMPLE_LEAD_INS: [&str; 8] =
    ["then", "next", "finally", "also", "first", "make sure to", "please", "remember to"];
const SUBORDINATE_OPENERS: [&str; 5] = ["after", "before", "once", "when", "while"];
const TRAILING_QUALIFIERS: [&str; 8] = [
    "where appropriate", "where applicable", "if needed", "if necessary", "as needed",
    "when possible", "if possible", "as appropriate",
];
const DROPPED_QUALIFIERS: [&str; 2] = ["on the given topic", "on this topic"];
const VACUOUS_OBJECTS: [&str; 2] = ["the information", "the results"];
const OBJECT_PREPOSITIONS: [&str; 6] = ["into", "to", "from", "with", "in", "for"];

fn strip_lead_ins(sentence: &str) -> String {
    let mut s = sentence.trim().to_string();
    loop {
        let lowered = s.to_lowercase();
        let mut stripped = false;
        for lead in SIMPLE_LEAD_INS {
            if lowered.starts_with(lead)
                && lowered.as_bytes().get(lead.len()).map(|b| !is_word_byte(*b)).unwrap_or(true)
            {
                s = s[lead.len()..].trim_start_matches([' ', ',']).trim_start().to_string();
                stripped = true;
                break;
            }
        }
        if stripped {
            continue;
        }
        // Subordinate lead-in: "After gathering information, ..." up to the
        // first comma, only when the comma falls within the first six words.
        let first_word = lowered.split_whitespace().next().unwrap_or("");
        if SUBORDINATE_OPENERS.contains(&first_word) {
            if let Some(comma) = s.find(',') {
                if s[..comma].split_whitespace().count() <= 6 {
                    s = s[comma + 1..].trim_start().to_string();
                    continue;
                }
            }
        }
        break;
    }
    s
}

fn clean_instruction(sentence: &str) -> String {
    let mut s = strip_lead_ins(sentence);
    for q in DROPPED_QUALIFIERS {
        s = replace_phrase(&s, q, "");
    }
    for obj in VACUOUS_OBJECTS {
        for prep in OBJECT_PREPOSITIONS {
            s = replace_phrase(&s, &format!("{obj} {prep}"), prep);
        }
    }
    s = s.trim_end_matches(['.', '!', '?', ' ']).to_string();
    loop {
        let lowered = s.to_lowercase();
        let mut stripped = false;
        for q in TRAILING_QUALIFIERS {
            if lowered.ends_with(q) {
                let cut = s.len() - q.len();
                s = s[..cut].trim_end_matches([' ', ',']).to_string();
                stripped = true;
                break;
            }
        }
        if !stripped {
            break;
        }
    }
    let words: Vec<&str> = s
        .split_whitespace()
        .filter(|w| {
            let t = w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
            !matches!(t.as_str(), "the" | "a" | "an")
        })
        .collect();
    capitalize_first(&words.join(" "))
}

fn task_marker_remainder(sentence: &str) -> Option<String> {
    let lowered = sentence.to_lowercase();
    let marker = "your task is to ";
    lowered.starts_with(marker).then(|| sentence[marker.len()..].to_string())
}

fn is_imperative(sentence: &str) -> bool {
    let stripped = strip_lead_ins(sentence);
    let first = stripped
        .split_whitespace()
        .next()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .unwrap_or_default();
    IMPERATIVE_VERBS.contains(&first.as_str())
}

fn is_instruction_block(sentences: &[String]) -> bool {
    let has_marker = sentences.iter().any(|s| task_marker_remainder(s).is_some());
    let imperative_count = sentences.iter().filter(|s| is_imperative(s)).count();
    has_marker || imperative_count >= 2
}

/// Stage 4: rewrite instruction blocks as one bullet per instruction.
/// Blocks with no detectable instructions are left untouched.
pub fn bullet_format(text: &str) -> String {
    let blocks: Vec<&str> = text.split("\n\n").collect();
    let rewritten: Vec<String> = blocks
        .iter()
        .map(|block| {
            let flat = block.split_whitespace().collect::<Vec<_>>().join(" ");
            let sentences = split_sentences(&flat);
            if sentences.is_empty() || !is_instruction_block(&sentences) {
                return block.to_string();
            }
            let mut header: Vec<String> = Vec::new();
            let mut bullets: Vec<String> = Vec::new();
            for sentence in &sentences {
                if let Some(rest) = task_marker_remainder(sentence) {
                    header.push("Your task:".to_string());
                    bullets.push(clean_instruction(&rest));
                } else if is_imperative(sentence) {
                    bullets.push(clean_instruction(sentence));
                } else if bullets.is_empty() {
                    header.push(sentence.clone());
                } else {
                    bullets.push(clean_instruction(sentence));
                }
            }
            let mut lines = Vec::new();
            if !header.is_empty() {
                lines.push(header.join(" "));
            }
            for b in bullets.iter().filter(|b| !b.is_empty()) {
                lines.push(format!("- {b}"));
            }
            lines.join("\n")
        })
        .collect();
    rewritten.join("\n\n")
}

/// Stage 5: sentence-boundary truncation to 90% of the prompt budget.
/// Returns the (possibly shortened) text and whether truncation happened.
pub fn truncate(text: &str, profile: &OptimizerProfile) -> (String, bool) {
    if est_tokens(text) <= profile.max_prompt_tokens {
        return (text.to_string(), false);
    }
    let budget_chars = (3.6 * profile.max_prompt_tokens as f64).floor() as usize;
    let mut kept = String::new();
    for sentence in split_sentences(text) {
        let added = sentence.chars().count() + usize::from(!kept.is_empty());
        if kept.chars().count() + added > budget_chars {
            break;
        }
        if !kept.is_empty() {
            kept.push(' ');
        }
        kept.push_str(&sentence);
    }
    if kept.is_empty() {
        // No sentence boundary inside the budget: hard cut keeps the cap honest.
        kept = text.chars().take(budget_chars).collect();
    }
    (kept, true)
}

/// A span of prompt text; protected spans survive truncation unconditionally.
#[derive(Debug, Clone)]
pub struct Segment {
    pub text: String,
    pub protected: bool,
}

impl Segment {
    pub fn protected(text: impl Into<String>) -> Self {
        Self { text: text.into(), protected: true }
    }

    pub fn plain(text: impl Into<String>) -> Self {
        Self { text: text.into(), protected: false }
    }
}

/// Truncation over tagged segments. Protected segments are always retained
/// in order; unprotected ones fill the remaining budget at sentence
/// boundaries. Errors if the protected segments alone exceed the budget.
pub fn truncate_segments(
    segments: &[Segment],
    profile: &OptimizerProfile,
) -> Result<(String, bool), PromptOptError> {
    let joined: Vec<&str> = segments.iter().map(|s| s.text.as_str()).collect();
    let full = joined.join(" ");
    if est_tokens(&full) <= profile.max_prompt_tokens {
        return Ok((full, false));
    }
    let budget_chars = (3.6 * profile.max_prompt_tokens as f64).floor() as usize;
    let protected_chars: usize = segments
        .iter()
        .filter(|s| s.protected)
        .map(|s| s.text.chars().count() + 1)
        .sum();
    if protected_chars.saturating_sub(1) > budget_chars {
        return Err(PromptOptError::ProtectedOverflow {
            needed: est_tokens(
                &segments
                    .iter()
                    .filter(|s| s.protected)
                    .map(|s| s.text.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
            ),
            budget: profile.max_prompt_tokens,
        });
    }
    let mut remaining = budget_chars.saturating_sub(protected_chars);
    let mut parts: Vec<String> = Vec::new();
    for segment in segments {
        if segment.protected {
            parts.push(segment.text.clone());
            continue;
        }
        let mut kept = String::new();
        for sentence in split_sentences(&segment.text) {
            let added = sentence.chars().count() + usize::from(!kept.is_empty());
            if added > remaining {
                break;
            }
            if !kept.is_empty() {
                kept.push(' ');
            }
            kept.push_str(&sentence);
            remaining -= added;
        }
        if !kept.is_empty() {
            parts.push(kept);
        }
    }
    Ok((parts.join(" "), true))
}

/// Result of a full optimization pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub text: String,
    pub original_est_tokens: usize,
    pub optimized_est_tokens: usize,
    pub stages_applied: Vec<String>,
    pub truncated: bool,
}

/// Run the enabled stages in order and record what was applied.
pub fn optimize(text: &str, profile: &OptimizerProfile, table: &PatternTable) -> OptimizationResult {
    let original_est_tokens = est_tokens(text);
    let mut current = text.to_string();
    let mut stages_applied = Vec::new();
    if profile.enable_compression {
        current = compress(&current, table);
        stages_applied.push("compress".to_string());
    }
    if profile.enable_simplification {
        current = simplify(&current);
        stages_applied.push("simplify".to_string());
    }
    if profile.enable_redundancy {
        current = remove_redundancy(&current);
        stages_applied.push("redundancy".to_string());
    }
    if profile.enable_bullets {
        current = bullet_format(&current);
        stages_applied.push("bullets".to_string());
    }
    let (current, truncated) = truncate(&current, profile);
    if truncated {
        stages_applied.push("truncate".to_string());
    }
    OptimizationResult {
        optimized_est_tokens: est_tokens(&current),
        text: current,
        original_est_tokens,
        stages_applied,
        truncated,
    }
}

/// Convenience wrapper bundling a profile and a pattern table.
#[derive(Debug, Clone)]
pub struct PromptOptimizer {
    pub profile: OptimizerProfile,
    pub table: PatternTable,
}

impl PromptOptimizer {
    pub fn new(profile: OptimizerProfile) -> Self {
        Self { profile, table: PatternTable::builtin() }
    }

    pub fn optimize(&self, text: &str) -> OptimizationResult {
        optimize(text, &self.profile, &self.table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_table_has_thirty_entries() {
        assert_eq!(PatternTable::builtin().entries.len(), 30);
    }

    #[test]
    fn compress_examples() {
        let table = PatternTable::builtin();
        assert_eq!(compress("in order to test", &table), "to test");
        assert_eq!(compress("it is important to note that X", &table), "X");
        assert_eq!(compress("plain text", &table), "plain text");
        assert_eq!(compress("Use it In Order To win", &table), "Use it to win");
    }

    #[test]
    fn compress_respects_word_boundaries() {
        let table = PatternTable::builtin();
        // "such as" must not fire inside other words.
        assert_eq!(compress("sucha such ass", &table), "sucha such ass");
        assert_eq!(compress("crisis able to recover", &table), "crisis able to recover");
    }

    #[test]
    fn compress_never_grows_and_reaches_fixed_point() {
        let table = PatternTable::builtin();
        let input = "In order to proceed, make use of the tool due to the fact that it is able to help, for example now.";
        let once = compress(input, &table);
        assert!(once.chars().count() <= input.chars().count());
        assert_eq!(compress(&once, &table), once);
    }

    #[test]
    fn simplify_splits_before_midpoint_conjunction() {
        let mut words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
        words.push("and".to_string());
        words.extend((12..24).map(|i| format!("w{i}")));
        let sentence = format!("{}.", words.join(" "));
        let result = simplify(&sentence);
        let sentences = split_sentences(&result);
        assert_eq!(sentences.len(), 2);
        assert!(sentences[1].starts_with("and "));
    }

    #[test]
    fn simplify_keeps_short_sentences() {
        let s = "This short sentence has fewer than twenty words and stays.";
        assert_eq!(simplify(s), s);
    }

    #[test]
    fn simplify_picks_conjunction_nearest_midpoint() {
        // 30 words, "and" at index 5, "but" at index 14; |14-15| < |5-15|.
        let mut words: Vec<String> = (0..5).map(|i| format!("a{i}")).collect();
        words.push("and".to_string());
        words.extend((0..8).map(|i| format!("b{i}")));
        words.push("but".to_string());
        words.extend((0..15).map(|i| format!("c{i}")));
        assert_eq!(words.len(), 30);
        let result = simplify(&format!("{}.", words.join(" ")));
        let first = split_sentences(&result).remove(0);
        assert!(first.ends_with("b7."), "split should land before 'but': {result}");
    }

    #[test]
    fn simplify_preserves_word_multiset() {
        let mut words: Vec<String> = (0..25).map(|i| format!("w{i}")).collect();
        words[10] = "because".to_string();
        let sentence = format!("{}.", words.join(" "));
        let result = simplify(&sentence);
        let mut before = crate::util::lower_tokens(&sentence);
        let mut after = crate::util::lower_tokens(&result);
        before.sort();
        after.sort();
        assert_eq!(before, after);
    }

    #[test]
    fn redundancy_removes_exact_duplicates() {
        assert_eq!(remove_redundancy("Do X. Do X."), "Do X.");
        assert_eq!(
            remove_redundancy("Compute the answer. Unrelated other sentence."),
            "Compute the answer. Unrelated other sentence."
        );
    }

    #[test]
    fn redundancy_strips_politeness_and_recapitalizes() {
        assert_eq!(remove_redundancy("Please do X."), "Do X.");
        assert_eq!(remove_redundancy("Kindly check the result."), "Check the result.");
        assert_eq!(remove_redundancy("Thank you."), "");
    }

    #[test]
    fn bullet_format_reference_pair() {
        let input = "You are a research assistant. Your task is to search for relevant \
                     information on the given topic using web search tools. After gathering \
                     information, analyze the key findings and identify common themes. Then \
                     synthesize the information into a coherent summary. Make sure to cite \
                     sources and provide specific examples where appropriate.";
        let expected = "You are a research assistant. Your task:\n\
                        - Search for relevant information using web search tools\n\
                        - Analyze key findings and identify common themes\n\
                        - Synthesize into coherent summary\n\
                        - Cite sources and provide specific examples";
        assert_eq!(bullet_format(input), expected);
    }

    #[test]
    fn bullet_format_leaves_prose_alone() {
        let input = "The sky was grey that morning. Rain seemed likely.";
        assert_eq!(bullet_format(input), input);
    }

    #[test]
    fn bullet_format_two_imperatives() {
        let out = bullet_format("Search the web. Summarize results.");
        assert_eq!(out.lines().filter(|l| l.starts_with("- ")).count(), 2);
    }

    #[test]
    fn truncate_under_limit_is_identity() {
        let profile = OptimizerProfile::for_size(SizeClass::Tiny);
        let text = "Short prompt.";
        assert_eq!(truncate(text, &profile), (text.to_string(), false));
    }

    #[test]
    fn truncate_exact_limit_is_identity() {
        let profile = OptimizerProfile::for_size(SizeClass::Tiny);
        let text: String = std::iter::repeat_n('x', 512 * 4).collect();
        let (out, flag) = truncate(&text, &profile);
        assert!(!flag);
        assert_eq!(out, text);
    }

    #[test]
    fn truncate_cuts_at_sentence_boundary() {
        let profile = OptimizerProfile::for_size(SizeClass::Tiny);
        let sentence = "This filler sentence is about sixty characters long in total. ";
        let text = sentence.repeat(140); // ~2200 tokens
        let (out, flag) = truncate(&text, &profile);
        assert!(flag);
        assert!(out.ends_with('.'));
        assert!(est_tokens(&out) <= (0.9 * 512.0) as usize + 1);
    }

    #[test]
    fn truncate_protected_segments_survive() {
        let profile = OptimizerProfile::for_size(SizeClass::Tiny);
        let filler = "Example history sentence that can be dropped when space runs out. ".repeat(60);
        let segments = vec![
            Segment::protected("System: you are terse."),
            Segment::plain(filler),
            Segment::protected("Task: compute the answer."),
        ];
        let (out, truncated) = truncate_segments(&segments, &profile).unwrap();
        assert!(truncated);
        assert!(out.contains("System: you are terse."));
        assert!(out.contains("Task: compute the answer."));
        assert!(est_tokens(&out) <= profile.max_prompt_tokens);
    }

    #[test]
    fn truncate_protected_overflow_errors() {
        let profile = OptimizerProfile::for_size(SizeClass::Tiny);
        let huge: String = std::iter::repeat_n('y', 4000).collect();
        let err = truncate_segments(&[Segment::protected(huge)], &profile);
        assert!(matches!(err, Err(PromptOptError::ProtectedOverflow { .. })));
    }

    #[test]
    fn optimize_records_stages_per_size() {
        let table = PatternTable::builtin();
        let text = "Check the data. Confirm the output.";
        let medium = optimize(text, &OptimizerProfile::for_size(SizeClass::Medium), &table);
        assert_eq!(medium.stages_applied, ["compress", "simplify", "redundancy", "bullets"]);
        let xl = optimize(text, &OptimizerProfile::for_size(SizeClass::Xl), &table);
        assert_eq!(xl.stages_applied, ["redundancy"]);
        let large = optimize(text, &OptimizerProfile::for_size(SizeClass::Large), &table);
        assert_eq!(large.stages_applied, ["compress", "redundancy"]);
    }

    #[test]
    fn optimize_empty_string() {
        let result = optimize(
            "",
            &OptimizerProfile::for_size(SizeClass::Medium),
            &PatternTable::builtin(),
        );
        assert_eq!(result.text, "");
        assert_eq!(result.original_est_tokens, 0);
        assert_eq!(result.optimized_est_tokens, 0);
    }

    #[test]
    fn optimize_is_idempotent_up_to_flag() {
        let table = PatternTable::builtin();
        let profile = OptimizerProfile::for_size(SizeClass::Small);
        let input = "You are a helper. Please search the web in order to find facts. \
                     Please search the web in order to find facts. Summarize results.";
        let once = optimize(input, &profile, &table);
        let twice = optimize(&once.text, &profile, &table);
        assert_eq!(once.text, twice.text);
    }

    #[test]
    fn optimize_output_never_exceeds_budget() {
        let table = PatternTable::builtin();
        let base = "This sentence pads the prompt with ordinary words for testing. ";
        for size in [SizeClass::Tiny, SizeClass::Small, SizeClass::Medium, SizeClass::Large, SizeClass::Xl] {
            let profile = OptimizerProfile::for_size(size);
            let long_text = base.repeat(800);
            let result = optimize(&long_text, &profile, &table);
            assert!(
                result.optimized_est_tokens <= profile.max_prompt_tokens,
                "{size:?}: {} > {}",
                result.optimized_est_tokens,
                profile.max_prompt_tokens
            );
        }
    }
}
