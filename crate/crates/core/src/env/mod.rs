//! Episodic text environments: ChainWorld, FourRoom and a single-agent
//! text Overcooked kitchen.
//!
//! Every environment renders a textual observation, an optional fixed-length
//! symbolic vector and a coarse [`SituationId`] used to key cached reasoning.

mod chain;
mod four_room;
mod overcooked;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use chain::{ChainState, ChainWorld, ChainWorldConfig, Observability, RewardSide};
pub use four_room::{FourRoom, FourRoomConfig, FourRoomLayout, FourRoomState, Position};
pub use overcooked::{
    FoodKind, FoodStage, Held, Overcooked, OvercookedConfig, OvercookedState, Recipe, Shaping,
};

/// Opaque, stable key describing the abstract circumstances of a state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SituationId(String);

impl SituationId {
    pub fn new(key: impl Into<String>) -> Self {
        SituationId(key.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SituationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub symbolic: Vec<f64>,
    pub situation: SituationId,
}

/// Discrete action index into the active environment's action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// Set when the episode ended because the step cap was hit.
    pub truncated: bool,
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;

    fn reset(&mut self, seed: u64) -> Observation;

    fn step(&mut self, action: Action) -> Result<StepOutcome>;

    fn observation(&self) -> Observation;

    fn situation(&self) -> SituationId;

    fn render_text(&self) -> String;

    /// Display tokens, one per action index.
    fn action_tokens(&self) -> &'static [&'static str];

    /// Natural-language phrase for each action, used to ground thoughts.
    fn action_phrases(&self) -> Vec<String> {
        self.action_tokens()
            .iter()
            .map(|t| format!("go {t}"))
            .collect()
    }

    fn action_count(&self) -> usize {
        self.action_tokens().len()
    }

    fn symbolic_len(&self) -> usize;

    /// One representative observation for every reachable situation.
    fn situation_examples(&self) -> Vec<Observation>;

    /// Fixed analytic (min, max) episode return used for normalization.
    fn return_bounds(&self) -> (f64, f64);

    fn is_done(&self) -> bool;

    fn steps_taken(&self) -> usize;

    /// Canonical serialization of the latent state.
    fn state_repr(&self) -> String;

    fn state_digest(&self) -> String {
        let digest = Sha256::digest(self.state_repr().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Environment section of the harness configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvConfig {
    Chainworld(ChainWorldConfig),
    Fourroom(FourRoomConfig),
    Overcooked(OvercookedConfig),
}

impl EnvConfig {
    pub fn chainworld_full() -> Self {
        EnvConfig::Chainworld(ChainWorldConfig::default())
    }

    pub fn chainworld_partial() -> Self {
        EnvConfig::Chainworld(ChainWorldConfig {
            observability: Observability::Partial,
            ..ChainWorldConfig::default()
        })
    }

    pub fn fourroom() -> Self {
        EnvConfig::Fourroom(FourRoomConfig::default())
    }

    pub fn overcooked() -> Self {
        EnvConfig::Overcooked(OvercookedConfig::default())
    }

    /// Preset lookup used by the `--env` flag.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "chainworld" | "chainworld-full" => Ok(Self::chainworld_full()),
            "chainworld-partial" => Ok(Self::chainworld_partial()),
            "fourroom" => Ok(Self::fourroom()),
            "overcooked" => Ok(Self::overcooked()),
            other => Err(Error::Config(format!(
                "unknown environment preset {other:?}"
            ))),
        }
    }

    /// Short label identifying the environment family and variant.
    pub fn label(&self) -> String {
        match self {
            EnvConfig::Chainworld(c) => match c.observability {
                Observability::Full => "chainworld-full".into(),
                Observability::Partial => "chainworld-partial".into(),
            },
            EnvConfig::Fourroom(_) => "fourroom".into(),
            EnvConfig::Overcooked(c) => format!("overcooked-{}", c.recipe.label()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Chainworld(c) => Box::new(ChainWorld::new(c.clone())?),
            EnvConfig::Fourroom(c) => Box::new(FourRoom::new(c.clone())?),
            EnvConfig::Overcooked(c) => Box::new(Overcooked::new(c.clone())?),
        })
    }
}

/// One line of a per-step trace dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub state_digest: String,
    pub obs_text: String,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
    pub situation: SituationId,
}

/// Writes [`TraceRecord`]s as JSON lines.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out }
    }

    pub fn write(&mut self, record: &TraceRecord) -> std::io::Result<()> {
        let line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        writeln!(self.out, "{line}")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub(crate) fn check_action(action: Action, count: usize) -> Result<usize> {
    if action.0 >= count {
        Err(Error::InvalidAction {
            index: action.0,
            count,
        })
    } else {
        Ok(action.0)
    }
}
