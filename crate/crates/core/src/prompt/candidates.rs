use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::util::{read_json, write_json};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub id: usize,
    pub text: String,
}

/// On-disk candidate set: `{task, candidates: [{id, text}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFile {
    pub task: String,
    pub candidates: Vec<CandidateEntry>,
}

impl CandidateFile {
    pub fn load(path: &Path) -> Result<Self> {
        let file: CandidateFile = read_json(path)?;
        file.validate()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate().map_err(Error::Config)?;
        write_json(path, self)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.candidates.is_empty() {
            return Err("candidate set is empty".into());
        }
        for (i, c) in self.candidates.iter().enumerate() {
            if c.id != i {
                return Err(format!(
                    "candidate ids must be dense 0..K, found {} at {i}",
                    c.id
                ));
            }
            if c.text.trim().is_empty() {
                return Err(format!("candidate {i} has empty text"));
            }
        }
        Ok(())
    }

    pub fn embed(&self, provider: &dyn EmbeddingProvider) -> Result<Vec<PromptCandidate>> {
        self.candidates
            .iter()
            .map(|c| {
                Ok(PromptCandidate {
                    id: c.id,
                    text: c.text.clone(),
                    embedding: provider.embed(&c.text)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptCandidate {
    pub id: usize,
    pub text: String,
    pub embedding: EmbeddingVector,
}
