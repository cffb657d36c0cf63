//! Rollouts through prompt policy, reasoner, action policy and environment,
//! alternating prompt-policy and action-policy updates, and metrics.

mod checkpoint;
mod metrics;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{checkpoint_path, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use metrics::{
    auc, mean, normalize, stderr, EpisodeMetrics, MetricsReport, SeedSummary, Summary,
};

use crate::action::{
    ActionDistribution, ActionPolicy, ActionPolicyConfig, PolicyInput, PpoSample, PpoStats,
};
use crate::cot::{CotReasoner, ReasonerConfig};
use crate::embed::{embed_history, EmbeddingConfig, EmbeddingProvider, EmbeddingVector};
use crate::env::{Action, EnvConfig, Environment, Observation, SituationId};
use crate::error::{Error, Result};
use crate::prompt::{
    check_gamma, random_select, CandidateFile, PgStats, PromptCandidate, PromptPolicy,
    PromptPolicyConfig, PromptStep, SelectorKind, UcbState,
};
use crate::util::{mix_seed, sha256_hex};

const STREAM_ENV: u64 = 1;
const STREAM_AGENT: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_UPDATE: u64 = 4;

/// Outer-loop reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// `-h`, the negative action-policy entropy.
    NegEntropy,
    EnvReward,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::NegEntropy => "neg-entropy",
            Objective::EnvReward => "env-reward",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg-entropy" | "entropy" => Ok(Objective::NegEntropy),
            "env-reward" | "env" => Ok(Objective::EnvReward),
            other => Err(Error::Config(format!(
                "unknown objective {other:?} (expected neg-entropy or env-reward)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub env: EnvConfig,
    /// Prompt candidate file; required unless the selector is `none`.
    pub candidates: Option<PathBuf>,
    pub selector: SelectorKind,
    pub objective: Objective,
    pub reasoner: ReasonerConfig,
    pub embedding: EmbeddingConfig,
    pub prompt_policy: PromptPolicyConfig,
    pub action_policy: ActionPolicyConfig,
    /// Outer discount.
    pub gamma: f64,
    pub ucb_exploration: f64,
    pub seeds: Vec<u64>,
    /// Training episodes per seed.
    pub episodes: usize,
    /// Episodes collected between update phases.
    pub batch_episodes: usize,
    /// Write a checkpoint every this many update phases (0: final only).
    pub checkpoint_every: usize,
    /// Episodes at each end of a run used for initial/final summaries.
    pub summary_window: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            env: EnvConfig::chainworld_full(),
            candidates: None,
            selector: SelectorKind::Learned,
            objective: Objective::NegEntropy,
            reasoner: ReasonerConfig::default(),
            embedding: EmbeddingConfig::default(),
            prompt_policy: PromptPolicyConfig::default(),
            action_policy: ActionPolicyConfig::default(),
            gamma: 0.95,
            ucb_exploration: 1.0,
            seeds: vec![0, 1, 2, 3, 4],
            episodes: 2000,
            batch_episodes: 16,
            checkpoint_every: 0,
            summary_window: 100,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        check_gamma(self.action_policy.gamma_i)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.batch_episodes == 0 {
            return Err(Error::Config("batch_episodes must be positive".into()));
        }
        if self.selector != SelectorKind::None && self.candidates.is_none() {
            return Err(Error::Config(format!(
                "selector {} needs a prompt candidate file",
                self.selector
            )));
        }
        if let Some(p) = &self.candidates {
            if self.selector != SelectorKind::None && !p.exists() {
                return Err(Error::Config(format!(
                    "candidate file {} does not exist",
                    p.display()
                )));
            }
        }
        let input = self.effective_input();
        if !(input.obs_text || input.thought || input.symbolic) {
            return Err(Error::Config("action policy input is empty".into()));
        }
        Ok(())
    }

    /// Input spec with thoughts switched off for the prompt-free baseline.
    pub fn effective_input(&self) -> crate::action::InputSpec {
        let mut input = self.action_policy.input;
        if self.selector == SelectorKind::None {
            input.thought = false;
        }
        input
    }

    fn effective_action_config(&self) -> ActionPolicyConfig {
        ActionPolicyConfig {
            input: self.effective_input(),
            ..self.action_policy.clone()
        }
    }
}

/// Credentials kept out of configs and manifests.
#[derive(Debug, Clone, Default)]
pub struct Secrets {
    pub llm_api_key: Option<String>,
    pub embed_api_key: Option<String>,
}

/// Shared, read-only collaborators for every rollout of a run.
pub struct Resources {
    pub env: EnvConfig,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub reasoner: Option<Arc<CotReasoner>>,
    pub candidates: Vec<PromptCandidate>,
    pub candidates_digest: Option<String>,
    pub phrases: Vec<EmbeddingVector>,
    pub bounds: (f64, f64),
    pub symbolic_len: usize,
    pub n_actions: usize,
}

impl Resources {
    pub fn from_config(config: &TrainerConfig, secrets: &Secrets) -> Result<Self> {
        config.validate()?;
        let probe = config.env.build()?;
        let embedder = config.embedding.build(secrets.embed_api_key.clone())?;
        let (candidates, candidates_digest) = match (&config.candidates, config.selector) {
            (Some(path), sel) if sel != SelectorKind::None => {
                let file = CandidateFile::load(path)?;
                let digest = sha256_hex(serde_json::to_string(&file)?.as_bytes());
                (file.embed(embedder.as_ref())?, Some(digest))
            }
            _ => (Vec::new(), None),
        };
        let reasoner = if config.selector == SelectorKind::None {
            None
        } else {
            Some(Arc::new(CotReasoner::new(
                probe.name(),
                config.reasoner.clone(),
                secrets.llm_api_key.clone(),
            )?))
        };
        let phrases = probe
            .action_phrases()
            .iter()
            .map(|p| embedder.embed(p))
            .collect::<Result<_>>()?;
        Ok(Resources {
            env: config.env.clone(),
            bounds: probe.return_bounds(),
            symbolic_len: probe.symbolic_len(),
            n_actions: probe.action_count(),
            embedder,
            reasoner,
            candidates,
            candidates_digest,
            phrases,
        })
    }
}

/// One environment step as stored in the buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub t: usize,
    pub obs_text: String,
    pub situation: SituationId,
    pub prompt_id: Option<usize>,
    /// Log-probability under the learned prompt policy (random: `-ln K`).
    pub prompt_log_prob: Option<f64>,
    pub history: Option<EmbeddingVector>,
    pub thought: Option<String>,
    pub action: usize,
    pub action_log_prob: f64,
    pub action_probs: Vec<f64>,
    /// Action-policy entropy `h` for this step.
    pub entropy: f64,
    pub value: f64,
    pub reward: f64,
    pub outer_reward: f64,
    pub next_obs_text: String,
    pub done: bool,
    pub truncated: bool,
    pub features: Vec<f64>,
    pub grounding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub episode: usize,
    pub env_seed: u64,
    pub records: Vec<TransitionRecord>,
}

impl Trajectory {
    pub fn raw_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.entropy).collect()
    }

    pub fn mean_entropy(&self) -> f64 {
        mean(&self.entropies())
    }

    pub fn ppo_samples(&self) -> Vec<PpoSample> {
        self.records
            .iter()
            .map(|r| PpoSample {
                features: r.features.clone(),
                grounding: r.grounding.clone(),
                action: r.action,
                old_log_prob: r.action_log_prob,
                reward: r.reward,
                value: r.value,
            })
            .collect()
    }

    /// Steps of the learned prompt policy; empty for other selectors.
    pub fn prompt_steps(&self) -> Vec<PromptStep> {
        self.records
            .iter()
            .filter_map(|r| {
                Some(PromptStep {
                    history: r.history.clone()?,
                    prompt_id: r.prompt_id?,
                    log_prob: r.prompt_log_prob?,
                    reward: r.outer_reward,
                })
            })
            .collect()
    }

    pub fn metrics(&self, bounds: (f64, f64)) -> EpisodeMetrics {
        let raw = self.raw_reward();
        EpisodeMetrics {
            episode: self.episode,
            seed: self.seed,
            raw_reward: raw,
            norm_reward: normalize(raw, bounds),
            mean_entropy: self.mean_entropy(),
            steps: self.records.len(),
            entropies: self.entropies(),
        }
    }
}

/// Environment reset seed of `episode` under run seed `seed`.
pub fn env_seed(seed: u64, episode: usize) -> u64 {
    mix_seed(&[seed, episode as u64, STREAM_ENV])
}

/// How actions are chosen during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Policies and counters for one training seed.
pub struct SeedRun<'r> {
    config: TrainerConfig,
    resources: &'r Resources,
    seed: u64,
    prompt: Option<PromptPolicy>,
    action: ActionPolicy,
    update_rng: ChaCha8Rng,
    episodes_seen: usize,
    updates: usize,
}

impl<'r> SeedRun<'r> {
    pub fn new(config: &TrainerConfig, resources: &'r Resources, seed: u64) -> Result<Self> {
        let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, STREAM_INIT]));
        let prompt = match config.selector {
            SelectorKind::Learned => Some(PromptPolicy::new(
                resources.candidates.clone(),
                config.prompt_policy.clone(),
                &mut init_rng,
            )?),
            _ => None,
        };
        let action_config = config.effective_action_config();
        let input_dim = action_config
            .input
            .dim(resources.embedder.dimension(), resources.symbolic_len);
        let action = ActionPolicy::new(
            action_config,
            input_dim,
            resources.n_actions,
            resources.phrases.clone(),
            &mut init_rng,
        )?;
        Ok(SeedRun {
            config: config.clone(),
            resources,
            seed,
            prompt,
            action,
            update_rng: ChaCha8Rng::seed_from_u64(mix_seed(&[seed, STREAM_UPDATE])),
            episodes_seen: 0,
            updates: 0,
        })
    }

    /// Rebuilds a run from a checkpoint (no optimizer state).
    pub fn from_checkpoint(
        config: &TrainerConfig,
        resources: &'r Resources,
        ck: &Checkpoint,
    ) -> Result<Self> {
        let env_label = resources.env.label();
        if ck.env != env_label {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint trained on {}, config environment is {env_label}",
                ck.env
            )));
        }
        if ck.embedding_provider != resources.embedder.provider_id() {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint embeddings {:?}, config embeddings {:?}",
                ck.embedding_provider,
                resources.embedder.provider_id()
            )));
        }
        let mut run = SeedRun::new(config, resources, ck.seed)?;
        run.action = ActionPolicy::with_params(
            ck.action_config.clone(),
            ck.action.clone(),
            resources.phrases.clone(),
        )?;
        if run.action.n_actions() != resources.n_actions {
            return Err(Error::CheckpointMismatch("action count differs".into()));
        }
        run.prompt = match (&ck.prompt, &ck.prompt_config, config.selector) {
            (Some(p), Some(pc), SelectorKind::Learned) => Some(PromptPolicy::with_params(
                resources.candidates.clone(),
                pc.clone(),
                p.clone(),
            )?),
            (None, _, SelectorKind::Learned) => {
                return Err(Error::CheckpointMismatch(
                    "checkpoint has no prompt policy".into(),
                ))
            }
            _ => None,
        };
        if let (Some(policy), Some(n)) = (run.prompt.as_mut(), &ck.prompt_normalizer) {
            policy.set_normalizer(n.clone())?;
        }
        run.episodes_seen = ck.episodes_seen;
        Ok(run)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn prompt_policy(&self) -> Option<&PromptPolicy> {
        self.prompt.as_ref()
    }

    pub fn action_policy(&self) -> &ActionPolicy {
        &self.action
    }

    pub fn action_policy_mut(&mut self) -> &mut ActionPolicy {
        &mut self.action
    }

    pub fn episodes_seen(&self) -> usize {
        self.episodes_seen
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            env: self.resources.env.label(),
            embedding_provider: self.resources.embedder.provider_id().to_string(),
            candidates_digest: self.resources.candidates_digest.clone(),
            selector: self.config.selector,
            seed: self.seed,
            episodes_seen: self.episodes_seen,
            action_config: self.action.config().clone(),
            action: self.action.params().clone(),
            prompt_config: self.prompt.as_ref().map(|p| p.config().clone()),
            prompt: self.prompt.as_ref().map(|p| p.params().clone()),
            prompt_normalizer: self.prompt.as_ref().map(|p| p.normalizer().clone()),
        }
    }

    pub fn env_seed(&self, episode: usize) -> u64 {
        env_seed(self.seed, episode)
    }

    /// Action-policy features and grounding scores for an observation and
    /// optional thought.
    fn policy_input(
        &self,
        obs: &Observation,
        thought: Option<&str>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let res = self.resources;
        let input = self.action.config().input;
        let obs_emb = if input.obs_text {
            Some(res.embedder.embed(&obs.text)?)
        } else {
            None
        };
        let thought_emb = match thought {
            Some(t) if input.thought || self.action.config().grounding => {
                Some(res.embedder.embed(t)?)
            }
            _ => None,
        };
        let features = input.features(
            &PolicyInput {
                obs: obs_emb.as_ref(),
                thought: thought_emb.as_ref(),
                symbolic: Some(&obs.symbolic),
            },
            res.embedder.dimension(),
            res.symbolic_len,
        )?;
        let grounding = self.action.grounding_scores(thought_emb.as_ref());
        Ok((features, grounding))
    }

    /// Action distribution after reasoning on `obs` with candidate
    /// `prompt_id` (no thought when `None`).
    pub fn action_distribution(
        &self,
        obs: &Observation,
        prompt_id: Option<usize>,
    ) -> Result<ActionDistribution> {
        let thought = match prompt_id {
            Some(id) => {
                let reasoner = self
                    .resources
                    .reasoner
                    .as_ref()
                    .ok_or_else(|| Error::Config("this run has no reasoner".into()))?;
                let candidate = self.resources.candidates.get(id).ok_or_else(|| {
                    Error::InvalidArgument(format!("prompt id {id} out of range"))
                })?;
                Some(reasoner.reason(obs, candidate)?.text)
            }
            None => None,
        };
        let (features, grounding) = self.policy_input(obs, thought.as_deref())?;
        self.action.distribution(&features, &grounding)
    }

    /// Learned-selector distribution over candidates for a history, most
    /// recent observation last. `None` for other selectors.
    pub fn prompt_distribution(&self, history: &[Observation]) -> Result<Option<Vec<f64>>> {
        let Some(policy) = self.prompt.as_ref() else {
            return Ok(None);
        };
        let emb = embed_history(
            self.resources.embedder.as_ref(),
            history,
            policy.config().history_window,
        )?;
        policy.distribution(&emb).map(Some)
    }

    /// Runs one episode with the current (frozen) policies.
    pub fn rollout(&self, episode: usize, mode: ActionMode) -> Result<Trajectory> {
        let env_seed = self.env_seed(episode);
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix_seed(&[self.seed, episode as u64, STREAM_AGENT]));
        let mut env = self.resources.env.build()?;
        let mut obs = env.reset(env_seed);
        let mut history = vec![obs.clone()];
        let mut ucb = UcbState::new(
            self.resources.candidates.len().max(1),
            self.config.ucb_exploration,
        );
        ucb.begin_episode();
        let mut records = Vec::new();
        loop {
            let step = self
                .step(env.as_mut(), &obs, &history, &mut ucb, &mut rng, mode)
                .map_err(|e| Error::EpisodeAborted {
                    steps: records.len(),
                    source: Box::new(e),
                })?;
            let stop = step.done || step.truncated;
            obs = env.observation();
            history.push(obs.clone());
            records.push(TransitionRecord {
                t: records.len(),
                ..step
            });
            if stop {
                break;
            }
        }
        Ok(Trajectory {
            seed: self.seed,
            episode,
            env_seed,
            records,
        })
    }

    fn step(
        &self,
        env: &mut dyn Environment,
        obs: &Observation,
        history: &[Observation],
        ucb: &mut UcbState,
        rng: &mut ChaCha8Rng,
        mode: ActionMode,
    ) -> Result<TransitionRecord> {
        let res = self.resources;
        let k = res.candidates.len();
        let (prompt_id, prompt_log_prob, hist_emb) = match self.config.selector {
            SelectorKind::Learned => {
                let policy = self.prompt.as_ref().expect("learned selector has a policy");
                let emb = embed_history(
                    res.embedder.as_ref(),
                    history,
                    policy.config().history_window,
                )?;
                let d = policy.sample_embedded(&emb, rng)?;
                (Some(d.prompt_id), Some(d.log_prob), Some(emb))
            }
            SelectorKind::Random => (Some(random_select(k, rng)), Some(-(k as f64).ln()), None),
            SelectorKind::Ucb => (Some(ucb.select()), None, None),
            SelectorKind::None => (None, None, None),
        };
        let thought = match prompt_id {
            Some(id) => {
                let reasoner = res
                    .reasoner
                    .as_ref()
                    .expect("prompted selectors have a reasoner");
                Some(reasoner.reason(obs, &res.candidates[id])?.text)
            }
            None => None,
        };
        let (features, grounding) = self.policy_input(obs, thought.as_deref())?;
        let mut sample = self.action.act(&features, &grounding, rng)?;
        if mode == ActionMode::Greedy {
            sample.action = self.action.greedy(&features, &grounding)?;
            sample.log_prob = sample.distribution.log_probs[sample.action];
        }
        let outcome = env.step(Action(sample.action))?;
        let outer_reward = match self.config.objective {
            Objective::NegEntropy => -sample.entropy,
            Objective::EnvReward => outcome.reward,
        };
        if let Some(id) = prompt_id {
            if self.config.selector == SelectorKind::Ucb {
                ucb.update(id, outer_reward);
            }
        }
        Ok(TransitionRecord {
            t: 0,
            obs_text: obs.text.clone(),
            situation: obs.situation.clone(),
            prompt_id,
            prompt_log_prob,
            history: hist_emb,
            thought,
            action: sample.action,
            action_log_prob: sample.log_prob,
            action_probs: sample.distribution.probs,
            entropy: sample.entropy,
            value: sample.value,
            reward: outcome.reward,
            outer_reward,
            next_obs_text: outcome.observation.text,
            done: outcome.done,
            truncated: outcome.truncated,
            features,
            grounding,
        })
    }

    /// Collects `n` episodes in parallel, numbered from `episodes_seen`.
    pub fn collect(&self, n: usize, mode: ActionMode) -> Result<Vec<Trajectory>> {
        let start = self.episodes_seen;
        (start..start + n)
            .into_par_iter()
            .map(|e| self.rollout(e, mode))
            .collect()
    }

    /// Outer update phase; a no-op unless the selector is learned.
    pub fn update_prompt(&mut self, batch: &[Trajectory]) -> Result<Vec<PgStats>> {
        let Some(policy) = self.prompt.as_mut() else {
            return Ok(Vec::new());
        };
        let steps: Vec<Vec<PromptStep>> = batch.iter().map(|t| t.prompt_steps()).collect();
        policy.observe_histories(steps.iter().flatten().map(|s| &s.history));
        if self.episodes_seen < policy.config().warmup_episodes {
            return Ok(Vec::new());
        }
        let lr = policy.config().learning_rate;
        (0..policy.config().epochs.max(1))
            .map(|_| policy.pg_update(&steps, self.config.gamma, lr))
            .collect()
    }

    /// Inner update phase.
    pub fn update_action(&mut self, batch: &[Trajectory]) -> Result<PpoStats> {
        let episodes: Vec<Vec<PpoSample>> = batch.iter().map(|t| t.ppo_samples()).collect();
        self.action.ppo_update(&episodes, &mut self.update_rng)
    }

    /// Collect, update the prompt policy, then the action policy.
    pub fn train_batch(&mut self, n: usize) -> Result<Vec<Trajectory>> {
        let batch = self.collect(n, ActionMode::Sample)?;
        self.update_prompt(&batch)?;
        self.update_action(&batch)?;
        self.episodes_seen += n;
        self.updates += 1;
        Ok(batch)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Root of the run directory; checkpoints go under `checkpoints/`.
    pub out_dir: Option<PathBuf>,
}

/// Result of a training run: metrics and the final policies per seed.
pub struct TrainOutcome {
    pub report: MetricsReport,
    pub finals: Vec<Checkpoint>,
}

/// Trains one seed to completion and returns its episode metrics.
pub fn train_seed(
    config: &TrainerConfig,
    resources: &Resources,
    seed: u64,
    options: &TrainOptions,
) -> Result<(Vec<EpisodeMetrics>, Checkpoint)> {
    let mut run = SeedRun::new(config, resources, seed)?;
    let mut metrics = Vec::with_capacity(config.episodes);
    while run.episodes_seen < config.episodes {
        let n = config
            .batch_episodes
            .min(config.episodes - run.episodes_seen);
        let batch = run.train_batch(n)?;
        for t in &batch {
            let m = t.metrics(resources.bounds);
            if !(m.raw_reward.is_finite() && m.mean_entropy.is_finite()) {
                return Err(Error::non_finite(
                    "episode metrics",
                    format!("seed {seed} episode {}", t.episode),
                ));
            }
            metrics.push(m);
        }
        if let Some(dir) = &options.out_dir {
            if config.checkpoint_every > 0 && run.updates % config.checkpoint_every == 0 {
                let name = format!("ep-{:06}", run.episodes_seen);
                run.checkpoint().save(&checkpoint_path(dir, seed, &name))?;
            }
        }
    }
    let last = run.checkpoint();
    if let Some(dir) = &options.out_dir {
        last.save(&checkpoint_path(dir, seed, "final"))?;
    }
    Ok((metrics, last))
}

/// Trains every configured seed (seeds run in parallel).
pub fn train(
    config: &TrainerConfig,
    resources: &Resources,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    if config.episodes == 0 {
        return Err(Error::Config("episode budget must be positive".into()));
    }
    let per_seed: Vec<(Vec<EpisodeMetrics>, Checkpoint)> = config
        .seeds
        .par_iter()
        .map(|&seed| train_seed(config, resources, seed, options))
        .collect::<Result<_>>()?;
    let mut episodes = Vec::new();
    let mut finals = Vec::new();
    for (m, ck) in per_seed {
        episodes.extend(m);
        finals.push(ck);
    }
    let report = MetricsReport::build(
        resources.env.label(),
        config.selector.to_string(),
        config.objective.to_string(),
        resources.bounds,
        config.summary_window,
        episodes,
    )?;
    Ok(TrainOutcome { report, finals })
}

/// Runs `episodes` frozen-policy episodes from a checkpoint.
pub fn evaluate(
    config: &TrainerConfig,
    resources: &Resources,
    checkpoint: &Checkpoint,
    episodes: usize,
    mode: ActionMode,
) -> Result<MetricsReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least one episode".into(),
        ));
    }
    let run = SeedRun::from_checkpoint(config, resources, checkpoint)?;
    // evaluation episodes live in their own index range, after training
    let start = EVAL_OFFSET;
    let metrics = (start..start + episodes)
        .into_par_iter()
        .map(|e| run.rollout(e, mode).map(|t| t.metrics(resources.bounds)))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::build(
        resources.env.label(),
        config.selector.to_string(),
        config.objective.to_string(),
        resources.bounds,
        config.summary_window,
        metrics,
    )
}

const EVAL_OFFSET: usize = 1 << 40;

/// Runs a hand-written policy `policy(env, obs) -> action` for each seed and
/// episode count, without prompts or learning.
pub fn evaluate_policy<F>(
    env_config: &EnvConfig,
    seeds: &[u64],
    episodes: usize,
    policy: F,
) -> Result<MetricsReport>
where
    F: Fn(&dyn Environment, &Observation) -> Action + Sync,
{
    if episodes == 0 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least one episode".into(),
        ));
    }
    let probe = env_config.build()?;
    let bounds = probe.return_bounds();
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..episodes).map(move |e| (s, e)))
        .collect();
    let metrics = jobs
        .into_par_iter()
        .map(|(seed, e)| {
            let mut env = env_config.build()?;
            let mut obs = env.reset(env_seed(seed, e));
            let mut rewards = Vec::new();
            loop {
                let a = policy(env.as_ref(), &obs);
                let out = env.step(a)?;
                rewards.push(out.reward);
                obs = out.observation;
                if out.done || out.truncated {
                    break;
                }
            }
            let raw: f64 = rewards.iter().sum();
            Ok(EpisodeMetrics {
                episode: e,
                seed,
                raw_reward: raw,
                norm_reward: normalize(raw, bounds),
                mean_entropy: 0.0,
                steps: rewards.len(),
                entropies: vec![0.0; rewards.len()],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::build(
        env_config.label(),
        "scripted".into(),
        "none".into(),
        bounds,
        100,
        metrics,
    )
}

/// Loads the final checkpoint of `seed` under a run directory.
pub fn load_final(run_dir: &Path, seed: u64) -> Result<Checkpoint> {
    Checkpoint::load(&checkpoint_path(run_dir, seed, "final"))
}
