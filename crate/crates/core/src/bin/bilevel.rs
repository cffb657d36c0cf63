use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bilevel_cot::harness::{self, ErrorRecord, Overrides};
use bilevel_cot::llm::ChatConfig;
use bilevel_cot::Result;

#[derive(Parser)]
#[command(
    name = "bilevel",
    version,
    about = "Train and evaluate prompt-selecting CoT agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Seed to run; repeat for several. Replaces the config's seed list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Prompt selector: learned, random, ucb or none.
    #[arg(long)]
    selector: Option<String>,
    /// Outer objective: neg-entropy or env-reward.
    #[arg(long)]
    objective: Option<String>,
    /// Reasoner backend: cache, template or remote.
    #[arg(long)]
    reasoner: Option<String>,
    /// Environment preset, e.g. chainworld-partial.
    #[arg(long)]
    env: Option<String>,
    /// Dotted-path override, e.g. --set episodes=200. Repeatable.
    #[arg(long = "set", value_parser = parse_set)]
    set: Vec<(String, String)>,
}

fn parse_set(s: &str) -> std::result::Result<(String, String), String> {
    Overrides::parse_assignment(s).map_err(|e| e.to_string())
}

impl ConfigArgs {
    fn resolve(&self) -> Result<harness::Resolved> {
        let overrides = Overrides {
            seeds: self.seeds.clone(),
            selector: self.selector.clone(),
            objective: self.objective.clone(),
            reasoner: self.reasoner.clone(),
            env: self.env.clone(),
            set: self.set.clone(),
        };
        harness::load(&self.config, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one run directory (all configured seeds).
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint without updates.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Take the most likely action instead of sampling.
        #[arg(long)]
        greedy: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate run directories into curve and AUC CSVs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill the configured CoT cache for every (situation, prompt) pair.
    CacheCot {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Ask the chat backend for prompt candidates.
    GenPrompts {
        /// Task file with task and state descriptions.
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Chat settings as JSON (endpoint may also come from LLM_ENDPOINT).
        #[arg(long)]
        chat: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train { config, out } => {
            let resolved = config.resolve()?;
            let outcome = harness::cmd_train(&resolved, &out)?;
            let r = &outcome.report;
            Ok(format!(
                "{} {} {}: auc {:.4} ± {:.4} over {} seeds -> {}",
                r.env,
                r.selector,
                r.objective,
                r.auc_mean,
                r.auc_stderr,
                r.seeds.len(),
                out.display()
            ))
        }
        Command::Eval {
            config,
            checkpoint,
            episodes,
            greedy,
            out,
        } => {
            let resolved = config.resolve()?;
            let r = harness::cmd_eval(&resolved, &checkpoint, episodes, greedy, &out)?;
            Ok(format!(
                "eval auc {:.4} over {} episodes -> {}",
                r.auc_mean,
                r.episodes.len(),
                out.display()
            ))
        }
        Command::Report { runs, out } => {
            let r = harness::cmd_report(&runs, &out)?;
            Ok(format!(
                "{} methods -> {}, {}",
                r.methods.len(),
                r.curves.display(),
                r.auc.display()
            ))
        }
        Command::CacheCot { config } => {
            let resolved = config.resolve()?;
            let r = harness::cmd_cache_cot(&resolved)?;
            let line = serde_json::to_string(&r)?;
            if r.failures.is_empty() {
                Ok(line)
            } else {
                Err(bilevel_cot::Error::Config(format!(
                    "{} of {} pairs failed: {line}",
                    r.failures.len(),
                    r.pairs
                )))
            }
        }
        Command::GenPrompts { task, k, out, chat } => {
            let mut chat_config: ChatConfig = match chat {
                Some(p) => bilevel_cot::util::read_json(&p)?,
                None => ChatConfig::default(),
            };
            if let Ok(ep) = std::env::var(harness::LLM_ENDPOINT) {
                if !ep.is_empty() {
                    chat_config.endpoint = Some(ep);
                }
            }
            let key = std::env::var(harness::LLM_API_KEY)
                .ok()
                .filter(|s| !s.is_empty());
            let file = harness::cmd_gen_prompts(&task, k, &out, &chat_config, key)?;
            Ok(format!(
                "{} candidates -> {}",
                file.candidates.len(),
                out.display()
            ))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = ErrorRecord::from_error(&e);
            eprintln!(
                "{}",
                serde_json::to_string(&record).unwrap_or_else(|_| e.to_string())
            );
            ExitCode::FAILURE
        }
    }
}
