//! Run directories, manifests and the command implementations behind the
//! `bilevel` binary.
//!
//! A train run directory looks like
//!
//! ```text
//! <out>/manifest.json        resolved config, seeds, backends, paths
//! <out>/metrics.csv          one row per (seed, episode)
//! <out>/entropy.csv          per-step action entropy
//! <out>/summary.json         AUC and per-seed statistics
//! <out>/checkpoints/seed-<s>/{ep-NNNNNN,final}.json
//! <out>/error.json           only when the run aborted
//! ```

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use config::{
    load, resolve, set_path, Overrides, Resolved, EMBED_API_KEY, EMBED_ENDPOINT, LLM_API_KEY,
    LLM_ENDPOINT,
};
pub use report::{cmd_report, ReportOutput};

use crate::cot::{CotReasoner, ReasonerBackend};
use crate::error::{Error, Result};
use crate::llm::{generate_candidates, ChatClient, ChatConfig, TaskFile};
use crate::prompt::CandidateFile;
use crate::trainer::{
    self, ActionMode, Checkpoint, MetricsReport, Resources, TrainOptions, TrainOutcome,
    TrainerConfig,
};
use crate::util::{read_json, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ENTROPY_FILE: &str = "entropy.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backends {
    pub embedding: String,
    pub reasoner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub env: String,
    pub config: TrainerConfig,
    pub config_source: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub backends: Backends,
    pub created_unix: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        read_json(&run_dir.join(MANIFEST_FILE))
    }
}

/// Machine-readable record of an aborted command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl ErrorRecord {
    pub fn from_error(e: &Error) -> Self {
        ErrorRecord {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn manifest(
    command: &str,
    resolved: &Resolved,
    resources: &Resources,
    outputs: &[&str],
) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        env: resources.env.label(),
        config: resolved.config.clone(),
        config_source: resolved.source.clone(),
        seeds: resolved.config.seeds.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        backends: Backends {
            embedding: resources.embedder.provider_id().to_string(),
            reasoner: resources.reasoner.as_ref().map(|r| r.identity()),
        },
        created_unix: now_unix(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

fn write_entropy_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
    w.write_record(["seed", "episode", "step", "entropy"])?;
    for e in &report.episodes {
        for (t, h) in e.entropies.iter().enumerate() {
            w.write_record([
                e.seed.to_string(),
                e.episode.to_string(),
                t.to_string(),
                h.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_outputs(report: &MetricsReport, out: &Path, prefix: &str) -> Result<()> {
    report.save_csv(&out.join(format!("{prefix}{METRICS_FILE}")))?;
    write_entropy_csv(report, &out.join(format!("{prefix}{ENTROPY_FILE}")))?;
    write_json(
        &out.join(format!("{prefix}{SUMMARY_FILE}")),
        &report.summary(),
    )
}

/// Records `err` in `out/error.json` and passes it through.
fn record_failure<T>(out: &Path, result: Result<T>) -> Result<T> {
    if let Err(e) = &result {
        let _ = write_json(&out.join(ERROR_FILE), &ErrorRecord::from_error(e));
    }
    result
}

/// Trains and writes a self-describing run directory.
pub fn cmd_train(resolved: &Resolved, out: &Path) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    record_failure(out, train_into(resolved, out))
}

fn train_into(resolved: &Resolved, out: &Path) -> Result<TrainOutcome> {
    let resources = Resources::from_config(&resolved.config, &resolved.secrets)?;
    let m = manifest(
        "train",
        resolved,
        &resources,
        &[METRICS_FILE, ENTROPY_FILE, SUMMARY_FILE, "checkpoints"],
    );
    write_json(&out.join(MANIFEST_FILE), &m)?;
    let outcome = trainer::train(
        &resolved.config,
        &resources,
        &TrainOptions {
            out_dir: Some(out.to_path_buf()),
        },
    )?;
    write_outputs(&outcome.report, out, "")?;
    Ok(outcome)
}

/// Frozen-policy evaluation of one checkpoint.
pub fn cmd_eval(
    resolved: &Resolved,
    checkpoint: &Path,
    episodes: usize,
    greedy: bool,
    out: &Path,
) -> Result<MetricsReport> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    record_failure(
        out,
        (|| {
            let ck = Checkpoint::load(checkpoint)?;
            let mut config = resolved.config.clone();
            config.selector = ck.selector;
            config.seeds = vec![ck.seed];
            let resources = Resources::from_config(&config, &resolved.secrets)?;
            let m = manifest(
                "eval",
                &Resolved {
                    config: config.clone(),
                    ..resolved.clone()
                },
                &resources,
                &["eval_metrics.csv", "eval_entropy.csv", "eval_summary.json"],
            );
            write_json(&out.join(MANIFEST_FILE), &m)?;
            let mode = if greedy {
                ActionMode::Greedy
            } else {
                ActionMode::Sample
            };
            let report = trainer::evaluate(&config, &resources, &ck, episodes, mode)?;
            write_outputs(&report, out, "eval_")?;
            Ok(report)
        })(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheFailure {
    pub situation: String,
    pub prompt_id: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheReport {
    pub pairs: usize,
    pub filled: usize,
    pub already_cached: usize,
    pub remote_calls: usize,
    pub failures: Vec<CacheFailure>,
}

/// Fills the configured CoT cache for every (situation, prompt) pair.
pub fn cmd_cache_cot(resolved: &Resolved) -> Result<CacheReport> {
    let config = &resolved.config;
    let cache_path = config
        .reasoner
        .cache_path
        .clone()
        .ok_or_else(|| Error::Config("cache-cot needs reasoner.cache_path".into()))?;
    if config.reasoner.backend == ReasonerBackend::Cache {
        return Err(Error::Config(
            "cache-cot needs a generating backend (template or remote)".into(),
        ));
    }
    let candidates_path = config
        .candidates
        .clone()
        .ok_or_else(|| Error::Config("cache-cot needs a candidate file".into()))?;
    let env = config.env.build()?;
    let embedder = config
        .embedding
        .build(resolved.secrets.embed_api_key.clone())?;
    let candidates = CandidateFile::load(&candidates_path)?.embed(embedder.as_ref())?;
    let mut reasoner_config = config.reasoner.clone();
    reasoner_config.cache_path = Some(cache_path);
    let reasoner = CotReasoner::new(
        env.name(),
        reasoner_config,
        resolved.secrets.llm_api_key.clone(),
    )?;
    let mut report = CacheReport {
        pairs: 0,
        filled: 0,
        already_cached: 0,
        remote_calls: 0,
        failures: Vec::new(),
    };
    for obs in env.situation_examples() {
        for c in &candidates {
            report.pairs += 1;
            let key = config.reasoner.key_mode.key(&obs);
            if reasoner.cache().get(&key, c.id).is_some() {
                report.already_cached += 1;
                continue;
            }
            match reasoner.reason(&obs, c) {
                Ok(_) => report.filled += 1,
                Err(e) => report.failures.push(CacheFailure {
                    situation: key,
                    prompt_id: c.id,
                    error: e.to_string(),
                }),
            }
        }
    }
    report.remote_calls = reasoner.chat().map(|c| c.remote_calls()).unwrap_or(0);
    Ok(report)
}

/// Generates a candidate set with the chat backend and writes it to `out`.
pub fn cmd_gen_prompts(
    task_file: &Path,
    k: usize,
    out: &Path,
    chat: &ChatConfig,
    api_key: Option<String>,
) -> Result<CandidateFile> {
    let task: TaskFile = read_json(task_file)?;
    let client = ChatClient::new(chat.clone(), api_key)?;
    generate_candidates(&client, &task, k, out)
}
