use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::embed::EmbeddingConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::trainer::{Secrets, TrainerConfig};

pub const LLM_ENDPOINT: &str = "LLM_ENDPOINT";
pub const LLM_API_KEY: &str = "LLM_API_KEY";
pub const EMBED_ENDPOINT: &str = "EMBED_ENDPOINT";
pub const EMBED_API_KEY: &str = "EMBED_API_KEY";

/// Command-line adjustments applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub selector: Option<String>,
    pub objective: Option<String>,
    pub reasoner: Option<String>,
    pub env: Option<String>,
    /// Generic `dotted.path=value` assignments; values parse as JSON when
    /// possible and as strings otherwise.
    pub set: Vec<(String, String)>,
}

impl Overrides {
    pub fn parse_assignment(s: &str) -> Result<(String, String)> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
        if k.trim().is_empty() {
            return Err(Error::Config(format!("override {s:?} has an empty key")));
        }
        Ok((k.trim().to_string(), v.to_string()))
    }

    /// All overrides as ordered (path, JSON value) pairs.
    fn assignments(&self) -> Result<Vec<(String, Value)>> {
        let mut out = Vec::new();
        if let Some(env) = &self.env {
            out.push((
                "env".to_string(),
                serde_json::to_value(EnvConfig::preset(env)?)?,
            ));
        }
        if !self.seeds.is_empty() {
            out.push(("seeds".to_string(), serde_json::to_value(&self.seeds)?));
        }
        for (path, v) in [
            ("selector", &self.selector),
            ("objective", &self.objective),
            ("reasoner.backend", &self.reasoner),
        ] {
            if let Some(v) = v {
                out.push((path.to_string(), Value::String(v.clone())));
            }
        }
        for (k, v) in &self.set {
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.clone()));
            out.push((k.clone(), value));
        }
        Ok(out)
    }
}

/// Sets `root.a.b.c = value`, creating intermediate objects.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override {path}: {part:?} is not inside an object"))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

/// A fully resolved run configuration plus the secrets kept out of it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: TrainerConfig,
    pub secrets: Secrets,
    pub source: Option<PathBuf>,
}

fn resolve_path(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Pure resolution: (config JSON, its directory, overrides, environment)
/// to a typed config. Relative paths resolve against `base_dir`.
pub fn resolve(
    mut raw: Value,
    base_dir: &Path,
    overrides: &Overrides,
    env: &BTreeMap<String, String>,
) -> Result<Resolved> {
    if !raw.is_object() {
        return Err(Error::Config("config root must be a JSON object".into()));
    }
    for (path, value) in overrides.assignments()? {
        set_path(&mut raw, &path, value)?;
    }
    let mut config: TrainerConfig =
        serde_json::from_value(raw).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    if let Some(ep) = env.get(LLM_ENDPOINT).filter(|s| !s.is_empty()) {
        config.reasoner.chat.endpoint = Some(ep.clone());
    }
    if let EmbeddingConfig::Remote(r) = &mut config.embedding {
        if let Some(ep) = env.get(EMBED_ENDPOINT).filter(|s| !s.is_empty()) {
            r.endpoint = Some(ep.clone());
        }
        resolve_path(base_dir, &mut r.cache_path);
    }
    if let Some(p) = config.candidates.as_mut() {
        resolve_path(base_dir, p);
    }
    if let Some(p) = config.reasoner.cache_path.as_mut() {
        resolve_path(base_dir, p);
    }
    if let Some(p) = config.reasoner.chat.response_cache.as_mut() {
        resolve_path(base_dir, p);
    }
    let secrets = Secrets {
        llm_api_key: env.get(LLM_API_KEY).cloned().filter(|s| !s.is_empty()),
        embed_api_key: env.get(EMBED_API_KEY).cloned().filter(|s| !s.is_empty()),
    };
    Ok(Resolved {
        config,
        secrets,
        source: None,
    })
}

/// Reads `path` and resolves it against the process environment.
pub fn load(path: &Path, overrides: &Overrides) -> Result<Resolved> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let raw: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let env: BTreeMap<String, String> = [LLM_ENDPOINT, LLM_API_KEY, EMBED_ENDPOINT, EMBED_API_KEY]
        .into_iter()
        .filter_map(|k| std::env::var(k).ok().map(|v| (k.to_string(), v)))
        .collect();
    let mut resolved = resolve(raw, base, overrides, &env)?;
    resolved.source = Some(path.to_path_buf());
    Ok(resolved)
}
