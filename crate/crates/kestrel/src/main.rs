//! Thin command-line front end over the library: run a query, hold an
//! interactive session, manage configuration, and export/import/clear
//! long-term memory.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kestrel::agent::{backend_from_document, Agent, AgentConfig};
use kestrel::config::{
    apply_defaults, load_with_env, template_yaml, validate, ConfigDocument, SchemaSpec,
};
use kestrel::memory::{default_keywords, LongTermMemory, ScoringWeights};
use kestrel::tools::{FixtureSearchClient, ToolRegistry, WebSearchTool};
use kestrel::tracking::export_markdown;

#[derive(Parser)]
#[command(name = "kestrel", version, about = "Agent orchestration kernel for small language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the agent on a single query.
    Run(RunArgs),
    /// Start an interactive conversation session.
    Interactive(InteractiveArgs),
    /// Configuration management.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
    /// Long-term memory operations.
    Memory {
        #[command(subcommand)]
        command: MemoryCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    /// The query to execute.
    query: String,
    #[arg(short, long, default_value = "./agent_config.yaml")]
    config: PathBuf,
    /// Model name (overrides config).
    #[arg(short, long)]
    model: Option<String>,
    /// Comma-separated tool names.
    #[arg(short, long)]
    tools: Option<String>,
    /// Sampling temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// Maximum tokens to generate.
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Execution timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Session id for memory persistence.
    #[arg(long)]
    session_id: Option<String>,
    /// Show the execution trace.
    #[arg(long)]
    verbose: bool,
    /// Output format.
    #[arg(long, value_parser = ["text", "json", "markdown"], default_value = "text")]
    output: String,
    /// Save the result to a file.
    #[arg(short = 'o', long)]
    output_file: Option<PathBuf>,
}

#[derive(Args)]
struct InteractiveArgs {
    #[arg(short, long, default_value = "./agent_config.yaml")]
    config: PathBuf,
    #[arg(long)]
    session_id: Option<String>,
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Validate a configuration file.
    Validate {
        path: PathBuf,
        /// Treat warnings as errors.
        #[arg(long)]
        strict: bool,
    },
    /// Emit a template configuration.
    Generate {
        #[arg(long, default_value = "medium")]
        model_size: String,
        #[arg(long, default_value = "calculator,web_search")]
        tools: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Show the effective configuration after merging and defaults.
    Show {
        path: PathBuf,
        /// Substitute environment variables before printing.
        #[arg(long)]
        resolve_env: bool,
    },
}

#[derive(Subcommand)]
enum MemoryCommand {
    /// Export long-term memory as JSON.
    Export {
        #[arg(short, long, default_value = "./agent_config.yaml")]
        config: PathBuf,
        #[arg(short = 'o', long)]
        output_file: Option<PathBuf>,
    },
    /// Import long-term memory from a JSON export.
    Import {
        file: PathBuf,
        #[arg(short, long, default_value = "./agent_config.yaml")]
        config: PathBuf,
    },
    /// Delete all long-term memory.
    Clear {
        #[arg(short, long, default_value = "./agent_config.yaml")]
        config: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Interactive(args) => cmd_interactive(args),
        Command::Config { command } => cmd_config(command),
        Command::Memory { command } => cmd_memory(command),
    };
    if let Err(message) = outcome {
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}

fn load_config(path: &std::path::Path) -> Result<ConfigDocument, String> {
    let env: BTreeMap<String, String> = std::env::vars().collect();
    if path.exists() {
        load_with_env(path, &env).map_err(|e| e.to_string())
    } else {
        Ok(ConfigDocument::empty())
    }
}

fn default_tools(filter: Option<&str>) -> Arc<ToolRegistry> {
    let roots = std::env::current_dir().map(|d| vec![d]).unwrap_or_default();
    let full = ToolRegistry::with_builtins(roots);
    let _ = full.register(Arc::new(WebSearchTool::new(Arc::new(FixtureSearchClient::new()))));
    match filter {
        None => Arc::new(full),
        Some(names) => {
            let filtered = ToolRegistry::new();
            for name in names.split(',').map(str::trim) {
                if let Some(tool) = full.get(name) {
                    let _ = filtered.register(tool);
                }
            }
            Arc::new(filtered)
        }
    }
}

fn build_agent(doc: &ConfigDocument, run: Option<&RunArgs>) -> Result<Agent, String> {
    let schema = SchemaSpec::builtin();
    let report = validate(doc, &schema);
    if !report.is_valid() {
        let mut message = String::from("configuration invalid:\n");
        for (path, why) in &report.errors {
            message.push_str(&format!("  {path}: {why}\n"));
        }
        return Err(message);
    }
    let doc = apply_defaults(doc, &schema);
    let backend = backend_from_document(&doc).map_err(|e| e.to_string())?;
    let mut config = AgentConfig::from_document(&doc);
    let mut tool_filter = None;
    if let Some(args) = run {
        if let Some(t) = args.temperature {
            config.generation.temperature = t;
        }
        if let Some(m) = args.max_tokens {
            config.generation.max_tokens = m;
        }
        if let Some(t) = args.timeout {
            config.timeout = t;
        }
        tool_filter = args.tools.as_deref();
    }
    Ok(Agent::builder(backend)
        .with_tools(default_tools(tool_filter))
        .with_config(config)
        .build())
}

fn cmd_run(args: RunArgs) -> Result<(), String> {
    let mut doc = load_config(&args.config)?;
    if let Some(model) = &args.model {
        let over = ConfigDocument::from_value(json!({"model": {"name": model}}));
        doc = kestrel::config::merge(&doc, &over);
    }
    let agent = build_agent(&doc, Some(&args))?;
    let response = agent.run(&args.query, args.session_id.as_deref()).map_err(|e| e.to_string())?;
    let rendered = match args.output.as_str() {
        "json" => serde_json::to_string_pretty(&json!({
            "content": response.content,
            "tokens": response.tokens,
            "metadata": response.metadata,
        }))
        .unwrap_or_default(),
        "markdown" => format!(
            "# Answer\n\n{}\n\n{}",
            response.content,
            export_markdown(&response.tree)
        ),
        _ => response.content.clone(),
    };
    match &args.output_file {
        Some(path) => std::fs::write(path, &rendered).map_err(|e| e.to_string())?,
        None => println!("{rendered}"),
    }
    if args.verbose {
        eprintln!("\n--- trace ---\n{}", response.trace);
        eprintln!("{}", export_markdown(&response.tree));
    }
    Ok(())
}

fn cmd_interactive(args: InteractiveArgs) -> Result<(), String> {
    let doc = load_config(&args.config)?;
    let mut agent = build_agent(&doc, None)?;
    let stdin = std::io::stdin();
    let mut turns = 0u64;
    let mut tokens = 0u64;
    let mut tool_calls = 0u64;
    println!("kestrel interactive session (/help for commands, /exit to quit)");
    loop {
        print!("> ");
        std::io::stdout().flush().ok();
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).map_err(|e| e.to_string())? == 0 {
            break;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(command) = line.strip_prefix('/') {
            let mut parts = command.split_whitespace();
            match parts.next().unwrap_or("") {
                "help" => println!("/help /clear /save [file] /load [file] /config [key value] /stats /exit"),
                "exit" | "quit" => break,
                "clear" => {
                    agent.memory().lock().unwrap().short_term.clear();
                    println!("conversation cleared");
                }
                "stats" => {
                    println!("Session statistics:");
                    println!("  Messages: {turns}");
                    println!("  Tokens used: {tokens}");
                    println!("  Tool calls: {tool_calls}");
                }
                "save" => {
                    let path = parts.next().unwrap_or("session.json");
                    let memory = agent.memory();
                    let memory = memory.lock().unwrap();
                    let export = memory.long_term.export_json();
                    std::fs::write(path, export).map_err(|e| e.to_string())?;
                    println!("saved to {path}");
                }
                "load" => {
                    let path = parts.next().unwrap_or("session.json");
                    let raw = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
                    let memory = agent.memory();
                    let mut memory = memory.lock().unwrap();
                    let count = memory.long_term.import_json(&raw).map_err(|e| e.to_string())?;
                    println!("loaded {count} entries from {path}");
                }
                "config" => {
                    let key = parts.next();
                    let value = parts.next();
                    match (key, value) {
                        (Some(key), Some(value)) => {
                            let parsed: serde_json::Value =
                                serde_json::from_str(value).unwrap_or(json!(value));
                            let mut over = json!({});
                            let mut cursor = &mut over;
                            let segments: Vec<&str> = key.split('.').collect();
                            for s in &segments[..segments.len() - 1] {
                                cursor = cursor
                                    .as_object_mut()
                                    .unwrap()
                                    .entry(s.to_string())
                                    .or_insert(json!({}));
                            }
                            cursor
                                .as_object_mut()
                                .unwrap()
                                .insert(segments.last().unwrap().to_string(), parsed);
                            let merged = kestrel::config::merge(&doc, &ConfigDocument::from_value(over));
                            match agent.hot_reload(&merged, None) {
                                Ok(updated) => {
                                    agent = updated;
                                    println!("updated {key}");
                                }
                                Err(e) => println!("refused: {e}"),
                            }
                        }
                        _ => println!("usage: /config <key> <value>"),
                    }
                }
                other => println!("unknown command /{other}"),
            }
            continue;
        }
        match agent.run(line, args.session_id.as_deref()) {
            Ok(response) => {
                turns += 2;
                tokens += response.tokens;
                tool_calls += response.tool_calls.len() as u64;
                println!("{}", response.content);
            }
            Err(e) => println!("error: {e}"),
        }
    }
    Ok(())
}

fn cmd_config(command: ConfigCommand) -> Result<(), String> {
    let schema = SchemaSpec::builtin();
    match command {
        ConfigCommand::Validate { path, strict } => {
            let doc = load_config(&path)?;
            let report = validate(&doc, &schema);
            for (p, m) in &report.errors {
                println!("error: {p}: {m}");
            }
            for (p, m) in &report.warnings {
                println!("warning: {p}: {m}");
            }
            if report.is_valid() && (!strict || report.warnings.is_empty()) {
                println!("{} is valid", path.display());
                Ok(())
            } else {
                Err(format!(
                    "{} error(s), {} warning(s)",
                    report.errors.len(),
                    report.warnings.len()
                ))
            }
        }
        ConfigCommand::Generate { model_size, tools, output } => {
            let tool_list: Vec<&str> = tools.split(',').map(str::trim).collect();
            let text = template_yaml(&model_size, &tool_list);
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| e.to_string())?,
                None => print!("{text}"),
            }
            Ok(())
        }
        ConfigCommand::Show { path, resolve_env } => {
            let doc = if resolve_env {
                load_config(&path)?
            } else {
                let raw = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
                ConfigDocument::from_str_with_env(&raw, &placeholder_env(&raw))
                    .map_err(|e| e.to_string())?
            };
            let effective = apply_defaults(&doc, &schema);
            print!("{}", effective.to_yaml());
            Ok(())
        }
    }
}

/// For `config show` without env resolution: map every referenced variable
/// to its own `${NAME}` marker so the output keeps the placeholders.
fn placeholder_env(raw: &str) -> BTreeMap<String, String> {
    let re = regex::Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)").unwrap();
    re.captures_iter(raw)
        .map(|c| (c[1].to_string(), format!("${{{}}}", &c[1])))
        .collect()
}

fn memory_path(doc: &ConfigDocument) -> PathBuf {
    PathBuf::from(doc.get_str("memory.long_term.path").unwrap_or("./memories/agent.jsonl"))
}

fn cmd_memory(command: MemoryCommand) -> Result<(), String> {
    match command {
        MemoryCommand::Export { config, output_file } => {
            let doc = load_config(&config)?;
            let path = memory_path(&doc);
            let store = if path.exists() {
                LongTermMemory::load_jsonl(&path, ScoringWeights::default(), default_keywords())
                    .map_err(|e| e.to_string())?
            } else {
                LongTermMemory::new(ScoringWeights::default(), default_keywords())
            };
            let export = store.export_json();
            match output_file {
                Some(out) => std::fs::write(&out, export).map_err(|e| e.to_string())?,
                None => println!("{export}"),
            }
            Ok(())
        }
        MemoryCommand::Import { file, config } => {
            let doc = load_config(&config)?;
            let path = memory_path(&doc);
            let mut store = if path.exists() {
                LongTermMemory::load_jsonl(&path, ScoringWeights::default(), default_keywords())
                    .map_err(|e| e.to_string())?
            } else {
                LongTermMemory::new(ScoringWeights::default(), default_keywords())
            };
            let raw = std::fs::read_to_string(&file).map_err(|e| e.to_string())?;
            let count = store.import_json(&raw).map_err(|e| e.to_string())?;
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
            }
            store.save_jsonl(&path).map_err(|e| e.to_string())?;
            println!("imported {count} entries into {}", path.display());
            Ok(())
        }
        MemoryCommand::Clear { config } => {
            let doc = load_config(&config)?;
            let path = memory_path(&doc);
            if path.exists() {
                std::fs::remove_file(&path).map_err(|e| e.to_string())?;
            }
            println!("cleared {}", path.display());
            Ok(())
        }
    }
}
