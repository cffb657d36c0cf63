use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, Action, Environment, Observation, SituationId, StepOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observability {
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardSide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainWorldConfig {
    pub length: usize,
    pub observability: Observability,
    pub high_reward: f64,
    pub low_reward: f64,
    pub move_penalty: f64,
    pub step_cap: usize,
}

impl Default for ChainWorldConfig {
    fn default() -> Self {
        ChainWorldConfig {
            length: 10,
            observability: Observability::Full,
            high_reward: 100.0,
            low_reward: -5.0,
            move_penalty: -1.0,
            step_cap: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub position: usize,
    pub rewarded: RewardSide,
    pub steps: usize,
    pub done: bool,
}

/// A line of `length` cells; the agent starts on an interior cell and the
/// episode ends at either end. One end pays `high_reward`, the other
/// `low_reward`; every other move costs `move_penalty`.
pub struct ChainWorld {
    config: ChainWorldConfig,
    state: ChainState,
}

const ACTIONS: &[&str] = &["left", "right"];

impl ChainWorld {
    pub fn new(config: ChainWorldConfig) -> Result<Self> {
        if config.length < 3 {
            return Err(Error::Config(format!(
                "chain length must be at least 3, got {}",
                config.length
            )));
        }
        if config.step_cap == 0 {
            return Err(Error::Config("step_cap must be positive".into()));
        }
        let state = ChainState {
            position: config.length / 2,
            rewarded: RewardSide::Right,
            steps: 0,
            done: false,
        };
        Ok(ChainWorld { config, state })
    }

    pub fn config(&self) -> &ChainWorldConfig {
        &self.config
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    /// Places the environment in an explicit state (scripted tests, oracles).
    pub fn set_state(&mut self, state: ChainState) -> Result<()> {
        if state.position >= self.config.length {
            return Err(Error::InvalidArgument(format!(
                "position {} outside chain of length {}",
                state.position, self.config.length
            )));
        }
        self.state = state;
        Ok(())
    }

    fn last(&self) -> usize {
        self.config.length - 1
    }

    fn rewarded_index(&self, side: RewardSide) -> usize {
        match side {
            RewardSide::Left => 0,
            RewardSide::Right => self.last(),
        }
    }

    fn situation_of(side: RewardSide) -> SituationId {
        match side {
            RewardSide::Left => SituationId::new("reward-left"),
            RewardSide::Right => SituationId::new("reward-right"),
        }
    }

    fn text_for(&self, state: &ChainState) -> String {
        let last = self.last();
        let mut text = format!(
            "You are at position {} on a chain of positions 0 to {}.",
            state.position, last
        );
        match self.config.observability {
            Observability::Full => {
                let (side, end) = match state.rewarded {
                    RewardSide::Left => ("left", 0),
                    RewardSide::Right => ("right", last),
                };
                text.push_str(&format!(
                    " The reward {} is at the {side} end, position {end}. The other end gives {}.",
                    self.config.high_reward, self.config.low_reward
                ));
            }
            Observability::Partial => {
                text.push_str(&format!(
                    " Which end holds the reward {} is unknown.",
                    self.config.high_reward
                ));
            }
        }
        text
    }

    fn symbolic_for(&self, state: &ChainState) -> Vec<f64> {
        let mut v = vec![0.0; self.config.length + 2];
        v[state.position] = 1.0;
        if self.config.observability == Observability::Full {
            match state.rewarded {
                RewardSide::Left => v[self.config.length] = 1.0,
                RewardSide::Right => v[self.config.length + 1] = 1.0,
            }
        }
        v
    }

    fn observe(&self, state: &ChainState) -> Observation {
        Observation {
            text: self.text_for(state),
            symbolic: self.symbolic_for(state),
            situation: Self::situation_of(state.rewarded),
        }
    }
}

impl Environment for ChainWorld {
    fn name(&self) -> &'static str {
        "chainworld"
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rewarded = if rng.random_bool(0.5) {
            RewardSide::Left
        } else {
            RewardSide::Right
        };
        let position = rng.random_range(1..self.last());
        self.state = ChainState {
            position,
            rewarded,
            steps: 0,
            done: false,
        };
        self.observation()
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.state.done {
            return Err(Error::EpisodeDone);
        }
        let a = check_action(action, ACTIONS.len())?;
        let pos = self.state.position;
        self.state.position = if a == 0 { pos - 1 } else { pos + 1 };
        self.state.steps += 1;

        let good = self.rewarded_index(self.state.rewarded);
        let at_end = self.state.position == 0 || self.state.position == self.last();
        let reward = if !at_end {
            self.config.move_penalty
        } else if self.state.position == good {
            self.config.high_reward
        } else {
            self.config.low_reward
        };
        let truncated = !at_end && self.state.steps >= self.config.step_cap;
        self.state.done = at_end || truncated;
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.state.done,
            truncated,
        })
    }

    fn observation(&self) -> Observation {
        self.observe(&self.state)
    }

    fn situation(&self) -> SituationId {
        Self::situation_of(self.state.rewarded)
    }

    fn render_text(&self) -> String {
        self.text_for(&self.state)
    }

    fn action_tokens(&self) -> &'static [&'static str] {
        ACTIONS
    }

    fn symbolic_len(&self) -> usize {
        self.config.length + 2
    }

    fn situation_examples(&self) -> Vec<Observation> {
        [RewardSide::Left, RewardSide::Right]
            .into_iter()
            .map(|rewarded| {
                self.observe(&ChainState {
                    position: self.config.length / 2,
                    rewarded,
                    steps: 0,
                    done: false,
                })
            })
            .collect()
    }

    fn return_bounds(&self) -> (f64, f64) {
        let worst =
            self.config.low_reward + (self.config.length - 1) as f64 * self.config.move_penalty;
        (worst, self.config.high_reward)
    }

    fn is_done(&self) -> bool {
        self.state.done
    }

    fn steps_taken(&self) -> usize {
        self.state.steps
    }

    fn state_repr(&self) -> String {
        format!(
            "chain:pos={};rewarded={:?};steps={};done={}",
            self.state.position, self.state.rewarded, self.state.steps, self.state.done
        )
    }
}
