//! Chat-completions client with a write-through response cache, plus
//! automatic generation of prompt candidate sets.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};
use crate::prompt::{CandidateEntry, CandidateFile};
use crate::util::{read_jsonl, sha256_hex, JsonlAppender};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatConfig {
    /// Full chat-completions URL; `LLM_ENDPOINT` overrides it.
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub timeout_secs: u64,
    pub min_interval_ms: u64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// JSON-lines file of raw completions keyed by request digest.
    pub response_cache: Option<PathBuf>,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig {
            endpoint: None,
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            max_tokens: 256,
            timeout_secs: 60,
            min_interval_ms: 0,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            response_cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ResponseRecord {
    request_digest: String,
    model: String,
    completion: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct ChatClient {
    config: ChatConfig,
    client: JsonClient,
    cache: RwLock<HashMap<String, String>>,
    appender: Option<JsonlAppender>,
    remote_calls: AtomicUsize,
}

impl ChatClient {
    pub fn new(config: ChatConfig, api_key: Option<String>) -> Result<Self> {
        let endpoint = config.endpoint.clone().ok_or_else(|| {
            Error::Config("remote reasoner needs an endpoint (LLM_ENDPOINT)".into())
        })?;
        let mut cache = HashMap::new();
        if let Some(path) = &config.response_cache {
            for rec in read_jsonl::<ResponseRecord>(path)? {
                cache.entry(rec.request_digest).or_insert(rec.completion);
            }
        }
        let client = JsonClient::new(
            endpoint,
            api_key,
            Duration::from_secs(config.timeout_secs),
            config.retry.clone(),
            Duration::from_millis(config.min_interval_ms),
            config.max_in_flight,
        );
        Ok(ChatClient {
            appender: config.response_cache.clone().map(JsonlAppender::new),
            config,
            client,
            cache: RwLock::new(cache),
            remote_calls: AtomicUsize::new(0),
        })
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    /// Requests actually sent over the wire (cache hits excluded).
    pub fn remote_calls(&self) -> usize {
        self.remote_calls.load(Ordering::Relaxed)
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        })
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let body = self.request_body(messages);
        let digest = sha256_hex(serde_json::to_string(&body)?.as_bytes());
        if let Some(hit) = self.cache.read().expect("chat cache lock").get(&digest) {
            return Ok(hit.clone());
        }
        self.remote_calls.fetch_add(1, Ordering::Relaxed);
        let value = self.client.post(&body)?;
        let resp: ChatResponse = serde_json::from_value(value)
            .map_err(|e| self.client.malformed(format!("unexpected shape: {e}")))?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if text.trim().is_empty() {
            return Err(Error::EmptyCompletion);
        }
        let mut cache = self.cache.write().expect("chat cache lock");
        if let Some(existing) = cache.get(&digest) {
            return Ok(existing.clone());
        }
        if let Some(app) = &self.appender {
            app.append(&ResponseRecord {
                request_digest: digest.clone(),
                model: self.config.model.clone(),
                completion: text.clone(),
            })?;
        }
        cache.insert(digest, text.clone());
        Ok(text)
    }
}

/// Task text and state description fed to candidate generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub task: String,
    pub task_description: String,
    pub state_description: String,
}

pub fn generation_request(task_description: &str, state_description: &str, k: usize) -> String {
    format!(
        "{task_description}\n\n{state_description}\n\nWrite {k} short prompt questions that would help an agent \
         decide how to act for maximum reward. Put each on its own line as \"Prompt N: <question>\"."
    )
}

/// Extracts the text of `Prompt N:` lines, in order of appearance.
pub fn parse_prompt_lines(raw: &str) -> Vec<String> {
    raw.lines()
        .filter_map(|line| {
            let line = line.trim().trim_start_matches(['-', '*', ' ']).trim_start();
            let lower = line.to_ascii_lowercase();
            let rest = lower.strip_prefix("prompt")?;
            let digits = rest
                .trim_start()
                .chars()
                .take_while(|c| c.is_ascii_digit())
                .count();
            if digits == 0 {
                return None;
            }
            let head = line.len() - rest.trim_start().len() + digits;
            let text = line[head..].trim_start().strip_prefix(':')?.trim();
            (!text.is_empty()).then(|| text.to_string())
        })
        .collect()
}

/// Asks the chat model for `k` prompt candidates and writes them to `out`.
pub fn generate_candidates(
    client: &ChatClient,
    task: &TaskFile,
    k: usize,
    out: &Path,
) -> Result<CandidateFile> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let request = generation_request(&task.task_description, &task.state_description, k);
    let raw = client.complete(&[ChatMessage::user(request)])?;
    let mut lines = parse_prompt_lines(&raw);
    if lines.len() < k {
        return Err(Error::PromptParse {
            expected: k,
            found: lines.len(),
            raw,
        });
    }
    lines.truncate(k);
    let file = CandidateFile {
        task: task.task.clone(),
        candidates: lines
            .into_iter()
            .enumerate()
            .map(|(id, text)| CandidateEntry { id, text })
            .collect(),
    };
    file.save(out)?;
    Ok(file)
}
