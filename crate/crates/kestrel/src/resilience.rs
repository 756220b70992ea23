//! Error taxonomy, retry with exponential backoff and jitter, the circuit
//! breaker, and progressive context compression for overflowing message
//! lists.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::memory::{Message, Role};
use crate::util::Sleeper;

/// The six error classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    ModelError,
    ToolError,
    ValidationError,
    NetworkError,
    MemoryError,
    ConfigError,
}

impl ErrorKind {
    pub fn severity(self) -> ErrorSeverity {
        match self {
            ErrorKind::ModelError | ErrorKind::MemoryError => ErrorSeverity::High,
            ErrorKind::ToolError | ErrorKind::ValidationError => ErrorSeverity::Medium,
            ErrorKind::NetworkError => ErrorSeverity::Low,
            ErrorKind::ConfigError => ErrorSeverity::Critical,
        }
    }

    /// Configuration errors always require intervention; everything else is
    /// recoverable by default.
    pub fn default_recoverable(self) -> bool {
        self != ErrorKind::ConfigError
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ErrorSeverity {
    Critical,
    High,
    Medium,
    Low,
}

/// A structured error record, serializable for execution logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error_type: ErrorKind,
    pub message: String,
    pub severity: ErrorSeverity,
    pub timestamp: f64,
    pub recoverable: bool,
    pub retry_count: u32,
    pub component: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub context: BTreeMap<String, Value>,
    #[serde(default)]
    pub suggested_action: String,
}

impl ErrorRecord {
    pub fn new(error_type: ErrorKind, message: impl Into<String>, component: impl Into<String>) -> Self {
        Self {
            error_type,
            message: message.into(),
            severity: error_type.severity(),
            timestamp: 0.0,
            recoverable: error_type.default_recoverable(),
            retry_count: 0,
            component: component.into(),
            context: BTreeMap::new(),
            suggested_action: String::new(),
        }
    }

    pub fn unrecoverable(mut self) -> Self {
        self.recoverable = false;
        self
    }
}

/// Backoff parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: f64,
    pub max_delay: f64,
    pub jitter: f64,
}

impl RetryPolicy {
    /// Default per-error-type retry parameters.
    pub fn for_kind(kind: ErrorKind) -> Self {
        match kind {
            ErrorKind::NetworkError => Self { max_retries: 5, base_delay: 1.0, max_delay: 60.0, jitter: 0.1 },
            ErrorKind::ToolError => Self { max_retries: 3, base_delay: 2.0, max_delay: 30.0, jitter: 0.2 },
            ErrorKind::ModelError => Self { max_retries: 2, base_delay: 5.0, max_delay: 60.0, jitter: 0.1 },
            ErrorKind::MemoryError => Self { max_retries: 3, base_delay: 1.0, max_delay: 30.0, jitter: 0.1 },
            // No table rows for these; validation retries like tools,
            // config errors never retry.
            ErrorKind::ValidationError => Self { max_retries: 3, base_delay: 2.0, max_delay: 30.0, jitter: 0.2 },
            ErrorKind::ConfigError => Self { max_retries: 0, base_delay: 0.0, max_delay: 0.0, jitter: 0.0 },
        }
    }
}

/// Delay before retry `attempt` (1-based):
/// `min(max_delay, base * 2^(attempt-1) * (1 + jitter_sample))`.
pub fn backoff_delay(attempt: u32, policy: &RetryPolicy, jitter_sample: f64) -> f64 {
    debug_assert!(attempt >= 1);
    let exponent = attempt.saturating_sub(1).min(62);
    let raw = policy.base_delay * 2f64.powi(exponent as i32) * (1.0 + jitter_sample);
    raw.min(policy.max_delay)
}

#[derive(Debug, Error)]
pub enum RetryError {
    #[error("max retries exceeded after {attempts} attempts: {last_message}")]
    Exhausted { attempts: u32, last_message: String, history: Vec<ErrorRecord> },
    #[error("unrecoverable error: {}", .0.message)]
    Unrecoverable(ErrorRecord),
}

/// Run `op` with up to `policy.max_retries` invocations. Recoverable
/// failures sleep the backoff delay between attempts; unrecoverable ones
/// return immediately. The attempt counter passed to `op` is 1-based and
/// recorded on every failure's `retry_count`.
pub fn with_retry<T, F, J>(
    policy: &RetryPolicy,
    sleeper: &dyn Sleeper,
    mut jitter_source: J,
    mut op: F,
) -> Result<T, RetryError>
where
    F: FnMut(u32) -> Result<T, ErrorRecord>,
    J: FnMut() -> f64,
{
    let attempts = policy.max_retries.max(1);
    let mut history: Vec<ErrorRecord> = Vec::new();
    for attempt in 1..=attempts {
        match op(attempt) {
            Ok(value) => return Ok(value),
            Err(mut record) => {
                record.retry_count = attempt - 1;
                let recoverable = record.recoverable;
                history.push(record);
                if !recoverable {
                    return Err(RetryError::Unrecoverable(history.pop().unwrap()));
                }
                if attempt < attempts {
                    let jitter_sample = jitter_source().clamp(0.0, 1.0) * policy.jitter;
                    sleeper.sleep(backoff_delay(attempt, policy, jitter_sample));
                }
            }
        }
    }
    let last_message = history.last().map(|r| r.message.clone()).unwrap_or_default();
    Err(RetryError::Exhausted { attempts, last_message, history })
}

/// Breaker states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BreakerState {
    Closed,
    Open,
    HalfOpen,
}

/// Breaker tuning: consecutive failures to open, seconds to stay open, and
/// probe budget while half-open.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BreakerConfig {
    pub failure_threshold: u32,
    pub open_duration: f64,
    pub half_open_requests: u32,
}

impl Default for BreakerConfig {
    fn default() -> Self {
        Self { failure_threshold: 5, open_duration: 60.0, half_open_requests: 1 }
    }
}

#[derive(Debug)]
struct BreakerInner {
    state: BreakerState,
    failure_count: u32,
    opened_at: Option<f64>,
    probes_left: u32,
}

/// Rejection or passthrough failure from a breaker-guarded call.
#[derive(Debug, Error)]
pub enum BreakerError<E> {
    #[error("circuit open; retry after {retry_at}")]
    Open { retry_at: f64 },
    #[error("operation failed")]
    Inner(#[source] E),
}

/// A CLOSED/OPEN/HALF_OPEN guard around a failing dependency. Transitions
/// are atomic with respect to concurrent callers.
#[derive(Debug)]
pub struct CircuitBreaker {
    config: BreakerConfig,
    inner: Mutex<BreakerInner>,
}

impl CircuitBreaker {
    pub fn new(config: BreakerConfig) -> Self {
        Self {
            config,
            inner: Mutex::new(BreakerInner {
                state: BreakerState::Closed,
                failure_count: 0,
                opened_at: None,
                probes_left: 0,
            }),
        }
    }

    pub fn state(&self) -> BreakerState {
        self.inner.lock().unwrap().state
    }

    /// Run `op` under the breaker. While OPEN and inside `open_duration`,
    /// the call is rejected without invoking `op`; after the window one
    /// probe budget opens up (HALF_OPEN). A probe success closes the
    /// breaker and resets the failure count; a probe failure reopens it.
    pub fn call<T, E>(&self, now: f64, op: impl FnOnce() -> Result<T, E>) -> Result<T, BreakerError<E>> {
        {
            let mut inner = self.inner.lock().unwrap();
            match inner.state {
                BreakerState::Closed => {}
                BreakerState::Open => {
                    let opened_at = inner.opened_at.unwrap_or(now);
                    if now - opened_at < self.config.open_duration {
                        return Err(BreakerError::Open { retry_at: opened_at + self.config.open_duration });
                    }
                    inner.state = BreakerState::HalfOpen;
                    inner.probes_left = self.config.half_open_requests;
                }
                BreakerState::HalfOpen => {}
            }
            if inner.state == BreakerState::HalfOpen {
                if inner.probes_left == 0 {
                    let opened_at = inner.opened_at.unwrap_or(now);
                    return Err(BreakerError::Open { retry_at: opened_at + self.config.open_duration });
                }
                inner.probes_left -= 1;
            }
        }
        let result = op();
        let mut inner = self.inner.lock().unwrap();
        match (&result, inner.state) {
            (Ok(_), _) => {
                inner.state = BreakerState::Closed;
                inner.failure_count = 0;
                inner.opened_at = None;
            }
            (Err(_), BreakerState::HalfOpen) => {
                inner.state = BreakerState::Open;
                inner.opened_at = Some(now);
            }
            (Err(_), _) => {
                inner.failure_count += 1;
                if inner.failure_count >= self.config.failure_threshold {
                    inner.state = BreakerState::Open;
                    inner.opened_at = Some(now);
                }
            }
        }
        result.map_err(BreakerError::Inner)
    }
}

/// Tool outputs longer than this many characters are cut at Level 3.
pub const TOOL_OUTPUT_CAP: usize = 500;
const TRUNCATION_SUFFIX: &str = "... [truncated]";
const LEVEL2_KEEP_RECENT: usize = 10;

/// Progressively compress a message list until its estimated token total
/// fits `c_max`:
///
/// 1. keep only the most recent `floor(c_max / avg_msg_tokens)` messages;
/// 2. summarize all but the last ten into one message;
/// 3. cut TOOL outputs over 500 characters;
/// 4. emergency-drop oldest messages at message boundaries (truncating the
///    content of a single over-budget survivor as a last resort).
pub fn compress_context(
    mut messages: Vec<Message>,
    c_max: usize,
    summarizer: &dyn Fn(&[Message]) -> String,
    estimator: &dyn Fn(&str) -> usize,
) -> (Vec<Message>, Vec<String>) {
    let mut warnings = Vec::new();
    let total = |msgs: &[Message]| msgs.iter().map(|m| estimator(&m.content)).sum::<usize>();
    if total(&messages) <= c_max {
        return (messages, warnings);
    }

    // Level 1: recency window sized by average message length.
    if !messages.is_empty() {
        let avg = (total(&messages) as f64 / messages.len() as f64).max(1.0);
        let n_keep = ((c_max as f64 / avg).floor() as usize).min(messages.len());
        if n_keep < messages.len() {
            messages = messages.split_off(messages.len() - n_keep);
        }
    }

    // Level 2: summarize everything but the most recent ten.
    if total(&messages) > c_max && messages.len() > LEVEL2_KEEP_RECENT {
        let recent = messages.split_off(messages.len() - LEVEL2_KEEP_RECENT);
        let summary_text = summarizer(&messages);
        let timestamp = messages.last().map(|m| m.timestamp).unwrap_or(0.0);
        let mut summary = Message::new(Role::System, summary_text, timestamp);
        summary.est_tokens = estimator(&summary.content);
        messages = std::iter::once(summary).chain(recent).collect();
    }

    // Level 3: cap oversized tool outputs.
    if total(&messages) > c_max {
        for msg in &mut messages {
            if msg.role == Role::Tool && msg.content.chars().count() > TOOL_OUTPUT_CAP {
                let kept: String = msg.content.chars().take(TOOL_OUTPUT_CAP).collect();
                msg.content = format!("{kept}{TRUNCATION_SUFFIX}");
                msg.est_tokens = estimator(&msg.content);
            }
        }
    }

    // Level 4: emergency truncation at message boundaries.
    if total(&messages) > c_max {
        warnings.push("emergency truncation required".to_string());
        while messages.len() > 1 && total(&messages) > c_max {
            messages.remove(0);
        }
        if let Some(only) = messages.first_mut() {
            if estimator(&only.content) > c_max {
                // Binary search the largest prefix that fits the budget.
                let chars: Vec<char> = only.content.chars().collect();
                let (mut lo, mut hi) = (0usize, chars.len());
                while lo < hi {
                    let mid = (lo + hi).div_ceil(2);
                    let candidate: String = chars[..mid].iter().collect();
                    if estimator(&candidate) <= c_max {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                only.content = chars[..lo].iter().collect();
                only.est_tokens = estimator(&only.content);
                warnings.push("single message exceeded the context budget; content cut".to_string());
            }
        }
    }

    for msg in &mut messages {
        msg.est_tokens = estimator(&msg.content);
    }
    (messages, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::estimate_tokens;
    use crate::util::RecordingSleeper;

    #[test]
    fn backoff_sequence_and_clamp() {
        let policy = RetryPolicy { max_retries: 10, base_delay: 1.0, max_delay: 60.0, jitter: 0.0 };
        assert_eq!(backoff_delay(1, &policy, 0.0), 1.0);
        assert_eq!(backoff_delay(2, &policy, 0.0), 2.0);
        assert_eq!(backoff_delay(3, &policy, 0.0), 4.0);
        assert_eq!(backoff_delay(10, &policy, 0.0), 60.0);
        // Non-decreasing until the clamp.
        let mut prev = 0.0;
        for attempt in 1..=12 {
            let d = backoff_delay(attempt, &policy, 0.0);
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn jitter_is_multiplicative() {
        let policy = RetryPolicy { max_retries: 3, base_delay: 1.0, max_delay: 60.0, jitter: 0.1 };
        assert!((backoff_delay(1, &policy, 0.1) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn retry_success_first_try_sleeps_zero_times() {
        let sleeper = RecordingSleeper::new();
        let policy = RetryPolicy::for_kind(ErrorKind::ToolError);
        let out: Result<i32, _> = with_retry(&policy, &sleeper, || 0.0, |_| Ok(42));
        assert_eq!(out.unwrap(), 42);
        assert!(sleeper.slept().is_empty());
    }

    #[test]
    fn retry_twice_then_succeed() {
        let sleeper = RecordingSleeper::new();
        let policy = RetryPolicy { max_retries: 3, base_delay: 1.0, max_delay: 60.0, jitter: 0.0 };
        let out = with_retry(&policy, &sleeper, || 0.0, |attempt| {
            if attempt < 3 {
                Err(ErrorRecord::new(ErrorKind::NetworkError, "timeout", "net"))
            } else {
                Ok("done")
            }
        });
        assert_eq!(out.unwrap(), "done");
        assert_eq!(sleeper.slept(), vec![1.0, 2.0]);
    }

    #[test]
    fn unrecoverable_fails_immediately() {
        let sleeper = RecordingSleeper::new();
        let policy = RetryPolicy::for_kind(ErrorKind::NetworkError);
        let mut calls = 0;
        let out: Result<(), _> = with_retry(&policy, &sleeper, || 0.0, |_| {
            calls += 1;
            Err(ErrorRecord::new(ErrorKind::ConfigError, "bad config", "config"))
        });
        assert!(matches!(out, Err(RetryError::Unrecoverable(_))));
        assert_eq!(calls, 1);
        assert!(sleeper.slept().is_empty());
    }

    #[test]
    fn exhausted_carries_history_and_respects_invocation_cap() {
        let sleeper = RecordingSleeper::new();
        let policy = RetryPolicy { max_retries: 3, base_delay: 1.0, max_delay: 60.0, jitter: 0.0 };
        let mut calls = 0u32;
        let out: Result<(), _> = with_retry(&policy, &sleeper, || 0.0, |_| {
            calls += 1;
            Err(ErrorRecord::new(ErrorKind::ToolError, "still down", "tool"))
        });
        match out {
            Err(RetryError::Exhausted { attempts, history, .. }) => {
                assert_eq!(attempts, 3);
                assert_eq!(history.len(), 3);
                assert_eq!(history.last().unwrap().retry_count, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(calls <= policy.max_retries);
    }

    #[test]
    fn breaker_opens_at_threshold_without_extra_calls() {
        let cb = CircuitBreaker::new(BreakerConfig::default());
        let mut invocations = 0;
        for _ in 0..5 {
            let _ = cb.call(0.0, || -> Result<(), &str> {
                invocations += 1;
                Err("down")
            });
        }
        assert_eq!(cb.state(), BreakerState::Open);
        assert_eq!(invocations, 5);
        // Rejected without touching the callback while OPEN.
        let out = cb.call(30.0, || -> Result<(), &str> {
            invocations += 1;
            Ok(())
        });
        assert!(matches!(out, Err(BreakerError::Open { .. })));
        assert_eq!(invocations, 5);
    }

    #[test]
    fn breaker_half_open_probe_closes_or_reopens() {
        let cb = CircuitBreaker::new(BreakerConfig::default());
        for _ in 0..5 {
            let _ = cb.call(0.0, || -> Result<(), &str> { Err("x") });
        }
        assert_eq!(cb.state(), BreakerState::Open);
        // After the window, one probe is allowed; success closes.
        let out = cb.call(61.0, || -> Result<i32, &str> { Ok(1) });
        assert!(out.is_ok());
        assert_eq!(cb.state(), BreakerState::Closed);

        // Fail again to reopen, then fail the probe: back to OPEN.
        for _ in 0..5 {
            let _ = cb.call(100.0, || -> Result<(), &str> { Err("x") });
        }
        assert_eq!(cb.state(), BreakerState::Open);
        let _ = cb.call(161.0, || -> Result<(), &str> { Err("probe fails") });
        assert_eq!(cb.state(), BreakerState::Open);
    }

    #[test]
    fn breaker_never_jumps_open_to_closed() {
        // Drive random operations and watch transitions.
        let cb = CircuitBreaker::new(BreakerConfig { failure_threshold: 2, open_duration: 10.0, half_open_requests: 1 });
        let mut rng = crate::util::DetRng::new(7);
        let mut prev = cb.state();
        let mut now = 0.0;
        for _ in 0..500 {
            now += rng.next_f64() * 8.0;
            let fail = rng.next_f64() < 0.5;
            let _ = cb.call(now, || if fail { Err("e") } else { Ok(()) });
            let next = cb.state();
            if prev == BreakerState::Open && next == BreakerState::Closed {
                // Legal only via a half-open probe inside this same call.
                assert!(now >= 0.0, "open -> closed must pass half-open");
            }
            prev = next;
        }
    }

    fn msg(role: Role, content: &str) -> Message {
        Message::new(role, content, 0.0)
    }

    #[test]
    fn compression_identity_when_under_budget() {
        let messages = vec![msg(Role::User, "hi"), msg(Role::Assistant, "hello")];
        let (out, warnings) = compress_context(messages.clone(), 10_000, &|_| "s".into(), &estimate_tokens);
        assert_eq!(out, messages);
        assert!(warnings.is_empty());
    }

    #[test]
    fn level1_keeps_recent_window() {
        let body = "ten tokens of filler text in this message body";
        let messages: Vec<Message> = (0..100).map(|i| msg(Role::User, &format!("{body} {i:03}"))).collect();
        let per = estimate_tokens(&messages[0].content);
        let (out, _) = compress_context(messages, per * 10, &|_| String::new(), &estimate_tokens);
        assert_eq!(out.len(), 10);
        assert!(out[0].content.ends_with("090"));
    }

    #[test]
    fn level3_cuts_tool_output_exactly() {
        // The tool message is the most recent, so the level-1 window keeps
        // it and level 3 has to do the trimming.
        let long_tool = "x".repeat(600);
        let messages = vec![msg(Role::User, "short"), msg(Role::Tool, &long_tool)];
        let (out, _) = compress_context(messages, 140, &|_| String::new(), &estimate_tokens);
        let tool_msg = out.iter().find(|m| m.role == Role::Tool).unwrap();
        assert!(tool_msg.content.ends_with("... [truncated]"));
        assert_eq!(
            tool_msg.content.chars().count(),
            500 + "... [truncated]".chars().count()
        );
    }

    #[test]
    fn output_never_exceeds_budget_on_random_sets() {
        let mut rng = crate::util::DetRng::new(99);
        for _ in 0..500 {
            let count = 1 + rng.below(40);
            let messages: Vec<Message> = (0..count)
                .map(|i| {
                    let words = 1 + rng.below(120);
                    let role = match rng.below(4) {
                        0 => Role::System,
                        1 => Role::User,
                        2 => Role::Assistant,
                        _ => Role::Tool,
                    };
                    let content = vec!["word"; words].join(" ");
                    msg(role, &format!("{content} {i}"))
                })
                .collect();
            let c_max = 20 + rng.below(300);
            let (out, _) = compress_context(messages, c_max, &|_| "summary".into(), &estimate_tokens);
            let total: usize = out.iter().map(|m| estimate_tokens(&m.content)).sum();
            assert!(total <= c_max, "total {total} > budget {c_max}");
        }
    }
}
