//! Outer-loop prompt selection: the learned projected-similarity policy and
//! the random and UCB bandit baselines.

mod candidates;
mod policy;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use candidates::{CandidateEntry, CandidateFile, PromptCandidate};
pub(crate) use policy::check_gamma;
pub use policy::{
    entropy_return_to_go, reward_to_go, sample_categorical, HistoryNormalizer, PgStats,
    PromptDecision, PromptPolicy, PromptPolicyConfig, PromptPolicyParams, PromptStep, Similarity,
    WeightedChoice,
};

use crate::error::Error;

/// How the prompt for each step is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    Learned,
    Random,
    Ucb,
    /// No prompt and no thought: plain PPO on the observation.
    None,
}

impl SelectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::Learned => "learned",
            SelectorKind::Random => "random",
            SelectorKind::Ucb => "ucb",
            SelectorKind::None => "none",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "learned" => Ok(SelectorKind::Learned),
            "random" => Ok(SelectorKind::Random),
            "ucb" => Ok(SelectorKind::Ucb),
            "none" | "vanilla" => Ok(SelectorKind::None),
            other => Err(Error::Config(format!(
                "unknown selector {other:?} (expected learned, random, ucb or none)"
            ))),
        }
    }
}

pub fn random_select(k: usize, rng: &mut impl Rng) -> usize {
    rng.random_range(0..k)
}

/// Per-episode UCB bandit over prompt ids, scored on the outer reward.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbState {
    exploration: f64,
    counts: Vec<u64>,
    sums: Vec<f64>,
}

impl UcbState {
    pub fn new(k: usize, exploration: f64) -> Self {
        assert!(k > 0, "UCB needs at least one arm");
        UcbState {
            exploration,
            counts: vec![0; k],
            sums: vec![0.0; k],
        }
    }

    pub fn begin_episode(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.sums.iter_mut().for_each(|s| *s = 0.0);
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self, arm: usize) -> Option<f64> {
        (self.counts[arm] > 0).then(|| self.sums[arm] / self.counts[arm] as f64)
    }

    pub fn score(&self, arm: usize) -> Option<f64> {
        let mean = self.mean(arm)?;
        let total = self.total() as f64;
        Some(mean + self.exploration * (total.ln() / self.counts[arm] as f64).sqrt())
    }

    /// Untried arms first in id order, then the highest score (lowest id on ties).
    pub fn select(&self) -> usize {
        if let Some(arm) = self.counts.iter().position(|&c| c == 0) {
            return arm;
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for arm in 0..self.counts.len() {
            let s = self.score(arm).expect("every arm pulled");
            if s > best_score {
                best = arm;
                best_score = s;
            }
        }
        best
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.sums[arm] += reward;
    }
}
