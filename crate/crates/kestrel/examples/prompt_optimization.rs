//! Run the five-stage prompt optimizer at different model size classes and
//! watch the token estimates drop.
//!
//! ```bash
//! cargo run -p kestrel --example prompt_optimization
//! ```

use kestrel::promptopt::{optimize, OptimizerProfile, PatternTable, SizeClass};

const VERBOSE_PROMPT: &str = "You are a research assistant. Your task is to search for relevant \
information on the given topic using web search tools. After gathering information, analyze the \
key findings and identify common themes. Then synthesize the information into a coherent summary. \
Make sure to cite sources and provide specific examples where appropriate. It is important to \
note that you should make use of the search tool in order to find current facts. Please make use \
of the search tool in order to find current facts. Kindly double-check numbers due to the fact \
that small models are able to make arithmetic mistakes.";

fn main() {
    let table = PatternTable::builtin();
    for size in [SizeClass::Tiny, SizeClass::Medium, SizeClass::Xl] {
        let profile = OptimizerProfile::for_size(size);
        let result = optimize(VERBOSE_PROMPT, &profile, &table);
        println!("== {size:?} (budget {} tokens) ==", profile.max_prompt_tokens);
        println!(
            "stages: {:?}  tokens: {} -> {}{}",
            result.stages_applied,
            result.original_est_tokens,
            result.optimized_est_tokens,
            if result.truncated { " (truncated)" } else { "" },
        );
        println!("{}\n", result.text);
    }
}
