use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};
use crate::util::{read_jsonl, sha256_hex, JsonlAppender};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEmbedderConfig {
    /// Full URL of the embeddings endpoint; `EMBED_ENDPOINT` overrides it.
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model: String,
    pub dim: usize,
    pub cache_path: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub min_interval_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> u64 {
    30
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    provider_id: String,
    digest: String,
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Embeddings-over-HTTP client with a mandatory read-through disk cache
/// keyed by (provider id, content digest).
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    id: String,
    client: JsonClient,
    cache: RwLock<HashMap<String, Vec<f64>>>,
    appender: JsonlAppender,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig, api_key: Option<String>) -> Result<Self> {
        let endpoint = config.endpoint.clone().ok_or_else(|| {
            Error::Config("remote embedding provider needs an endpoint (EMBED_ENDPOINT)".into())
        })?;
        if config.dim == 0 {
            return Err(Error::Config(
                "remote embedding dim must be positive".into(),
            ));
        }
        let id = format!("remote:{}", config.model);
        let mut cache = HashMap::new();
        for rec in read_jsonl::<CacheRecord>(&config.cache_path)? {
            if rec.provider_id == id {
                cache.insert(rec.digest, rec.embedding);
            }
        }
        let client = JsonClient::new(
            endpoint,
            api_key,
            Duration::from_secs(config.timeout_secs),
            config.retry.clone(),
            Duration::from_millis(config.min_interval_ms),
            4,
        );
        Ok(RemoteEmbedder {
            appender: JsonlAppender::new(config.cache_path.clone()),
            config,
            id,
            client,
            cache: RwLock::new(cache),
        })
    }

    fn fetch(&self, text: &str) -> Result<Vec<f64>> {
        let body = json!({ "model": self.config.model, "input": [text] });
        let value = self.client.post(&body)?;
        let resp: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| self.client.malformed(format!("unexpected shape: {e}")))?;
        let first = resp
            .data
            .into_iter()
            .next()
            .ok_or_else(|| self.client.malformed("empty data array"))?;
        if first.embedding.len() != self.config.dim {
            return Err(self.client.malformed(format!(
                "expected dimension {}, got {}",
                self.config.dim,
                first.embedding.len()
            )));
        }
        Ok(first.embedding)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::InvalidArgument("cannot embed empty text".into()));
        }
        let digest = sha256_hex(text.as_bytes());
        if let Some(v) = self.cache.read().expect("cache lock").get(&digest) {
            return EmbeddingVector::new(v.clone(), self.id.as_str());
        }
        let values = self.fetch(text)?;
        let vector = EmbeddingVector::new(values.clone(), self.id.as_str())?;
        let mut cache = self.cache.write().expect("cache lock");
        if let Some(existing) = cache.get(&digest) {
            // a concurrent caller won the race; keep the first write
            return EmbeddingVector::new(existing.clone(), self.id.as_str());
        }
        self.appender.append(&CacheRecord {
            provider_id: self.id.clone(),
            digest: digest.clone(),
            embedding: values.clone(),
        })?;
        cache.insert(digest, values);
        Ok(vector)
    }
}
