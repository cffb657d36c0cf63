//! The frozen reasoner: maps (observation, prompt) to a thought through a
//! situation-keyed cache, offline templates or a remote chat model.

mod templates;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

pub use templates::template_thought;

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::llm::{ChatClient, ChatConfig, ChatMessage};
use crate::prompt::PromptCandidate;
use crate::util::{read_jsonl, sha256_hex, JsonlAppender};

/// Upper bound on thought length, in whitespace tokens.
pub const M_MAX: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThoughtSource {
    Cache,
    Template,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thought {
    pub text: String,
    pub token_count: usize,
    pub source: ThoughtSource,
    pub key: String,
    pub prompt_id: usize,
}

/// Cuts `text` after its `max_tokens`-th whitespace token, keeping the
/// original spacing of everything retained.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> (String, usize) {
    let mut count = 0;
    let mut end = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token {
                in_token = false;
                end = i;
                if count == max_tokens {
                    return (text[..end].to_string(), count);
                }
            }
        } else if !in_token {
            if count == max_tokens {
                return (text[..end].to_string(), count);
            }
            in_token = true;
            count += 1;
        }
    }
    (text.trim_end().to_string(), count)
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// One cache line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotRecord {
    pub situation_key: String,
    pub prompt_id: usize,
    pub thought_text: String,
    pub provenance: String,
}

/// Append-only (key, prompt id) -> thought store; entries never change once
/// written.
pub struct CotCache {
    entries: RwLock<HashMap<(String, usize), CotRecord>>,
    appender: Option<JsonlAppender>,
}

impl CotCache {
    pub fn in_memory() -> Self {
        CotCache {
            entries: RwLock::new(HashMap::new()),
            appender: None,
        }
    }

    /// Loads `path` (missing means empty) and appends new entries to it.
    pub fn open(path: &Path) -> Result<Self> {
        let cache = CotCache {
            entries: RwLock::new(HashMap::new()),
            appender: Some(JsonlAppender::new(path)),
        };
        {
            let mut entries = cache.entries.write().expect("cot cache lock");
            for rec in read_jsonl::<CotRecord>(path)? {
                insert_checked(&mut entries, rec)?;
            }
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.appender.as_ref().map(|a| a.path())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cot cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str, prompt_id: usize) -> Option<CotRecord> {
        self.entries
            .read()
            .expect("cot cache lock")
            .get(&(key.to_string(), prompt_id))
            .cloned()
    }

    /// Stores a record, returning the one that ends up cached. Re-inserting
    /// identical text is a no-op; different text is a conflict.
    pub fn insert(&self, record: CotRecord) -> Result<CotRecord> {
        let mut entries = self.entries.write().expect("cot cache lock");
        let k = (record.situation_key.clone(), record.prompt_id);
        if let Some(existing) = entries.get(&k) {
            if existing.thought_text == record.thought_text {
                return Ok(existing.clone());
            }
            return Err(Error::CacheConflict(format!("{}/{}", k.0, k.1)));
        }
        if let Some(app) = &self.appender {
            app.append(&record)?;
        }
        entries.insert(k, record.clone());
        Ok(record)
    }

    /// All records sorted by key.
    pub fn records(&self) -> Vec<CotRecord> {
        let mut out: Vec<_> = self
            .entries
            .read()
            .expect("cot cache lock")
            .values()
            .cloned()
            .collect();
        out.sort_by(|a, b| (&a.situation_key, a.prompt_id).cmp(&(&b.situation_key, b.prompt_id)));
        out
    }
}

fn insert_checked(entries: &mut HashMap<(String, usize), CotRecord>, rec: CotRecord) -> Result<()> {
    let k = (rec.situation_key.clone(), rec.prompt_id);
    match entries.get(&k) {
        Some(existing) if existing.thought_text != rec.thought_text => {
            Err(Error::CacheConflict(format!("{}/{}", k.0, k.1)))
        }
        Some(_) => Ok(()),
        None => {
            entries.insert(k, rec);
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReasonerBackend {
    /// Stored thoughts only; a miss is an error.
    Cache,
    Template,
    Remote,
}

impl ReasonerBackend {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonerBackend::Cache => "cache",
            ReasonerBackend::Template => "template",
            ReasonerBackend::Remote => "remote",
        }
    }
}

impl fmt::Display for ReasonerBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReasonerBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cache" => Ok(ReasonerBackend::Cache),
            "template" => Ok(ReasonerBackend::Template),
            "remote" => Ok(ReasonerBackend::Remote),
            other => Err(Error::Config(format!(
                "unknown reasoner {other:?} (expected cache, template or remote)"
            ))),
        }
    }
}

/// What the cache is keyed on besides the prompt id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyMode {
    Situation,
    Observation,
}

impl KeyMode {
    pub fn key(self, obs: &Observation) -> String {
        match self {
            KeyMode::Situation => obs.situation.as_str().to_string(),
            KeyMode::Observation => format!("obs-{}", &sha256_hex(obs.text.as_bytes())[..16]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerConfig {
    pub backend: ReasonerBackend,
    /// Persistent cache; without one, thoughts live in memory for the run.
    pub cache_path: Option<PathBuf>,
    pub key_mode: KeyMode,
    pub max_tokens: usize,
    /// System message for remote queries.
    pub task_description: Option<String>,
    pub chat: ChatConfig,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            backend: ReasonerBackend::Cache,
            cache_path: None,
            key_mode: KeyMode::Situation,
            max_tokens: M_MAX,
            task_description: None,
            chat: ChatConfig::default(),
        }
    }
}

pub fn default_task_description(env: &str) -> &'static str {
    match env {
        "chainworld" => {
            "An agent walks along a chain of ten positions numbered 0 to 9 and may go left or go right. \
             One end pays 100 and ends the game, the other end pays -5 and ends the game, and every move \
             costs 1."
        }
        "fourroom" => {
            "Four rooms (Room0 to Room3) sit in a ring joined by four hallways. The agent moves one cell \
             north, east, south or west per step, passes between rooms only through hallways and must reach \
             the goal cell quickly."
        }
        "overcooked" => {
            "A single cook works in a small kitchen holding a tomato, a lettuce, two plates and two \
             cutboards. Food is chopped on a cutboard, chopped food goes onto a plate, and the finished \
             plate is delivered at the delivery tile."
        }
        _ => "Help the agent reach its goal.",
    }
}

/// The text sent to a remote reasoner for one step.
pub fn compose_query(obs: &Observation, prompt: &PromptCandidate) -> String {
    format!(
        "Observation: {}\nSituation: {}\n{}",
        obs.text, obs.situation, prompt.text
    )
}

pub struct CotReasoner {
    env: String,
    config: ReasonerConfig,
    cache: CotCache,
    chat: Option<ChatClient>,
}

impl CotReasoner {
    pub fn new(env: &str, config: ReasonerConfig, llm_api_key: Option<String>) -> Result<Self> {
        let cache = match &config.cache_path {
            Some(p) => {
                if config.backend == ReasonerBackend::Cache && !p.exists() {
                    return Err(Error::MissingFile(p.clone()));
                }
                CotCache::open(p)?
            }
            None => CotCache::in_memory(),
        };
        if config.max_tokens == 0 {
            return Err(Error::Config("reasoner max_tokens must be positive".into()));
        }
        let chat = match config.backend {
            ReasonerBackend::Remote => Some(ChatClient::new(config.chat.clone(), llm_api_key)?),
            _ => None,
        };
        Ok(CotReasoner {
            env: env.to_string(),
            config,
            cache,
            chat,
        })
    }

    pub fn backend(&self) -> ReasonerBackend {
        self.config.backend
    }

    pub fn cache(&self) -> &CotCache {
        &self.cache
    }

    pub fn chat(&self) -> Option<&ChatClient> {
        self.chat.as_ref()
    }

    /// Identity string recorded in run manifests.
    pub fn identity(&self) -> String {
        match &self.chat {
            Some(c) => format!("remote:{}", c.model()),
            None => self.config.backend.as_str().to_string(),
        }
    }

    pub fn reason(&self, obs: &Observation, prompt: &PromptCandidate) -> Result<Thought> {
        let key = self.config.key_mode.key(obs);
        if let Some(rec) = self.cache.get(&key, prompt.id) {
            return Ok(self.thought(rec, ThoughtSource::Cache));
        }
        let (text, provenance, source) = match self.config.backend {
            ReasonerBackend::Cache => {
                return Err(Error::CacheMiss {
                    situation: key,
                    prompt_id: prompt.id,
                })
            }
            ReasonerBackend::Template => (
                template_thought(&self.env, &obs.situation, &prompt.text),
                "template".to_string(),
                ThoughtSource::Template,
            ),
            ReasonerBackend::Remote => {
                let chat = self.chat.as_ref().expect("remote backend has a client");
                let system = self
                    .config
                    .task_description
                    .clone()
                    .unwrap_or_else(|| default_task_description(&self.env).to_string());
                let messages = [
                    ChatMessage::system(system),
                    ChatMessage::user(compose_query(obs, prompt)),
                ];
                let text = chat.complete(&messages)?;
                (
                    text,
                    format!("remote:{}", chat.model()),
                    ThoughtSource::Remote,
                )
            }
        };
        let (text, _) = truncate_tokens(&text, self.config.max_tokens);
        if text.is_empty() {
            return Err(Error::EmptyCompletion);
        }
        let rec = self.cache.insert(CotRecord {
            situation_key: key,
            prompt_id: prompt.id,
            thought_text: text,
            provenance,
        })?;
        Ok(self.thought(rec, source))
    }

    fn thought(&self, rec: CotRecord, source: ThoughtSource) -> Thought {
        let (text, token_count) = truncate_tokens(&rec.thought_text, self.config.max_tokens);
        Thought {
            text,
            token_count,
            source,
            key: rec.situation_key,
            prompt_id: rec.prompt_id,
        }
    }
}
