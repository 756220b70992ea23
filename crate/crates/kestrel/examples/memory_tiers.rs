//! The three memory tiers working together: short-term summarization
//! triggers, consolidation into long-term storage, and semantic recall.
//!
//! ```bash
//! cargo run -p kestrel --example memory_tiers
//! ```

use kestrel::memory::{
    importance, retrieval_score, EntryType, ImportanceLevel, MemoryEntry, MemorySystem, Role,
    ScoringWeights, ShortTermConfig,
};

fn main() {
    let mut system = MemorySystem::new(ShortTermConfig {
        max_messages: 50,
        max_tokens: 2048,
        summarization_threshold: 0.85,
        keep_recent: 4,
        context_window: 512,
    });

    // A conversation long enough to cross the summarization threshold.
    let turns = [
        (Role::User, "My name is Alice and I am a data scientist working on climate prediction models for a research lab."),
        (Role::Assistant, "Nice to meet you, Alice. Climate prediction is a field where model choice matters a great deal."),
        (Role::User, "The deadline for our conference submission is March 15, remember that date because everything depends on it."),
        (Role::Assistant, "Noted. March 15 it is; that leaves time for one more training run and an ablation pass."),
        (Role::User, "I am particularly interested in transformer architectures for long-range weather forecasting over seasonal horizons."),
        (Role::Assistant, "Transformers have shown promising results for sequence modeling in weather data, especially with patched inputs."),
    ];
    for (i, (role, content)) in turns.iter().enumerate() {
        if let Some(trigger) = system.observe(*role, content, 1000.0 + i as f64) {
            println!("summarization trigger over {} message(s)", trigger.messages.len());
            system.short_term.apply_summary(&trigger, "Earlier: Alice, climate modeling, deadline March 15.", 2000.0);
        }
    }
    println!("short-term now holds {} messages, ~{} tokens", system.short_term.len(), system.short_term.token_sum());

    // Consolidate qualifying messages into long-term + vector stores.
    let promoted = system.consolidate();
    println!("consolidated {promoted} entries into long-term memory");

    // Importance scoring on a hand-built entry.
    let entry = MemoryEntry::new(
        "remember the critical deadline is March 15",
        EntryType::Fact,
        ImportanceLevel::High,
        1000.0,
    );
    let keywords = kestrel::memory::default_keywords();
    println!("importance of the deadline fact: {:.3}", importance(&entry, &keywords));

    // Retrieval scoring decays with age.
    let weights = ScoringWeights::default();
    for days in [0.0, 7.0, 30.0] {
        let now = 1000.0 + days * 86_400.0;
        let score = retrieval_score(&entry, None, now, &weights, 0, &keywords);
        println!("retrieval score after {days:>4} days: {score:.3}");
    }

    // Semantic recall through the vector tier.
    let found = system.recall("conference deadline", 3, 5000.0);
    println!("\nrecall(\"conference deadline\"):");
    for entry in found {
        println!("  [{:?}] {}", entry.entry_type, entry.content.chars().take(70).collect::<String>());
    }
}
