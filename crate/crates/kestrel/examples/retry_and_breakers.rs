//! Resilience machinery: exponential backoff, retry orchestration, the
//! circuit breaker state machine, and progressive context compression.
//!
//! ```bash
//! cargo run -p kestrel --example retry_and_breakers
//! ```

use kestrel::memory::{estimate_tokens, Message, Role};
use kestrel::resilience::{
    backoff_delay, compress_context, with_retry, BreakerConfig, CircuitBreaker, ErrorKind,
    ErrorRecord, RetryPolicy,
};
use kestrel::util::RecordingSleeper;

fn main() {
    // Backoff schedule for network errors: 1s, 2s, 4s... clamped at 60s.
    let policy = RetryPolicy::for_kind(ErrorKind::NetworkError);
    let delays: Vec<f64> = (1..=8).map(|n| backoff_delay(n, &policy, 0.0)).collect();
    println!("network backoff: {delays:?}");

    // A flaky operation that needs two retries.
    let sleeper = RecordingSleeper::new();
    let mut attempts = 0;
    let result = with_retry(&policy, &sleeper, || 0.0, |attempt| {
        attempts = attempt;
        if attempt < 3 {
            Err(ErrorRecord::new(ErrorKind::NetworkError, "connection reset", "api"))
        } else {
            Ok("fetched")
        }
    });
    println!("retries -> {:?} after {attempts} attempts, slept {:?}", result.unwrap(), sleeper.slept());

    // Breaker: opens at the failure threshold, rejects while open, and
    // closes again through a half-open probe.
    let breaker = CircuitBreaker::new(BreakerConfig::default());
    for t in 0..5 {
        let _ = breaker.call(t as f64, || Err::<(), _>("backend down"));
    }
    println!("\nbreaker after 5 failures: {:?}", breaker.state());
    let rejected = breaker.call(30.0, || Ok::<_, &str>("should not run"));
    println!("call at t=30s rejected: {}", rejected.is_err());
    let probe = breaker.call(61.0, || Ok::<_, &str>("probe succeeded"));
    println!("probe at t=61s: {:?} -> {:?}", probe.is_ok(), breaker.state());

    // Progressive context compression keeps a message list under budget.
    let mut messages: Vec<Message> = (0..40)
        .map(|i| Message::new(Role::User, format!("turn {i}: some ordinary conversation filler text"), i as f64))
        .collect();
    messages.push(Message::new(Role::Tool, "x".repeat(2000), 40.0));
    let before: usize = messages.iter().map(|m| estimate_tokens(&m.content)).sum();
    let (compressed, warnings) =
        compress_context(messages, 150, &|older| format!("[{} earlier turns summarized]", older.len()), &estimate_tokens);
    let after: usize = compressed.iter().map(|m| estimate_tokens(&m.content)).sum();
    println!("\ncompression: {before} tokens -> {after} tokens across {} messages", compressed.len());
    if !warnings.is_empty() {
        println!("warnings: {warnings:?}");
    }
}
