//! Text-to-vector providers shared by prompt candidates, observation
//! histories and thoughts.

mod hashing;
mod remote;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};

pub use hashing::HashingEmbedder;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig};

/// Fixed-dimension embedding tagged with the provider that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Arc<[f64]>,
    provider_id: Arc<str>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, provider_id: impl Into<Arc<str>>) -> Result<Self> {
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(
                "embedding",
                format!("entry {bad} is {}", values[bad]),
            ));
        }
        Ok(EmbeddingVector {
            values: values.into(),
            provider_id: provider_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<P> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed(text)
    }
}

/// In-memory memo over another provider.
pub struct Memoized<P> {
    inner: P,
    memo: RwLock<HashMap<String, EmbeddingVector>>,
}

impl<P: EmbeddingProvider> Memoized<P> {
    pub fn new(inner: P) -> Self {
        Memoized {
            inner,
            memo: RwLock::new(HashMap::new()),
        }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for Memoized<P> {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if let Some(v) = self.memo.read().expect("memo lock").get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.memo
            .write()
            .expect("memo lock")
            .entry(text.to_string())
            .or_insert_with(|| v.clone());
        Ok(v)
    }
}

/// Text fed to the encoder for a window of `window + 1` observations,
/// most recent last.
pub fn history_text(observations: &[Observation], window: usize) -> Result<String> {
    if observations.is_empty() {
        return Err(Error::InvalidArgument(
            "observation history is empty".into(),
        ));
    }
    let take = (window + 1).min(observations.len());
    let texts: Vec<&str> = observations[observations.len() - take..]
        .iter()
        .map(|o| o.text.as_str())
        .collect();
    Ok(texts.join("\n"))
}

pub fn embed_history(
    provider: &dyn EmbeddingProvider,
    observations: &[Observation],
    window: usize,
) -> Result<EmbeddingVector> {
    provider.embed(&history_text(observations, window)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "kebab-case")]
pub enum EmbeddingConfig {
    Local {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_ngram")]
        max_ngram: usize,
    },
    Remote(RemoteEmbedderConfig),
}

fn default_dim() -> usize {
    256
}

fn default_ngram() -> usize {
    2
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Local {
            dim: default_dim(),
            max_ngram: default_ngram(),
        }
    }
}

impl EmbeddingConfig {
    /// Builds a memoized provider. `api_key` is only used by the remote
    /// provider.
    pub fn build(&self, api_key: Option<String>) -> Result<Arc<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbeddingConfig::Local { dim, max_ngram } => {
                Arc::new(Memoized::new(HashingEmbedder::new(*dim, *max_ngram)?))
            }
            EmbeddingConfig::Remote(cfg) => {
                Arc::new(Memoized::new(RemoteEmbedder::new(cfg.clone(), api_key)?))
            }
        })
    }
}
