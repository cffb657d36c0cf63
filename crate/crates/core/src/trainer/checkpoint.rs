use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::action::{ActionPolicyConfig, ActionPolicyParams};
use crate::error::{Error, Result};
use crate::prompt::{HistoryNormalizer, PromptPolicyConfig, PromptPolicyParams, SelectorKind};
use crate::util::{read_json, write_json};

pub const CHECKPOINT_FORMAT: &str = "bilevel-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Weights plus the metadata needed to rebuild both policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub env: String,
    pub embedding_provider: String,
    pub candidates_digest: Option<String>,
    pub selector: SelectorKind,
    pub seed: u64,
    pub episodes_seen: usize,
    pub action_config: ActionPolicyConfig,
    pub action: ActionPolicyParams,
    pub prompt_config: Option<PromptPolicyConfig>,
    pub prompt: Option<PromptPolicyParams>,
    #[serde(default)]
    pub prompt_normalizer: Option<HistoryNormalizer>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointMismatch(format!(
                "{} is {} v{}, expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        Ok(ck)
    }
}

/// `<root>/checkpoints/seed-<seed>/<name>.json`
pub fn checkpoint_path(root: &Path, seed: u64, name: &str) -> PathBuf {
    root.join("checkpoints")
        .join(format!("seed-{seed}"))
        .join(format!("{name}.json"))
}
