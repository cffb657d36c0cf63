//! Inner-loop action policy: an MLP over concatenated observation and
//! thought embeddings (optionally the symbolic state), with a separate value
//! network, trained by clipped PPO on environment reward.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, softmax, Adam, Mlp};
use crate::prompt::{check_gamma, sample_categorical};

/// Which parts of the step input the policy sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSpec {
    pub obs_text: bool,
    pub thought: bool,
    pub symbolic: bool,
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec {
            obs_text: true,
            thought: false,
            symbolic: false,
        }
    }
}

impl InputSpec {
    pub fn dim(&self, embed_dim: usize, symbolic_len: usize) -> usize {
        (self.obs_text as usize + self.thought as usize) * embed_dim
            + self.symbolic as usize * symbolic_len
    }

    /// Concatenates the enabled parts in the order obs, thought, symbolic.
    pub fn features(
        &self,
        input: &PolicyInput<'_>,
        embed_dim: usize,
        symbolic_len: usize,
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim(embed_dim, symbolic_len));
        let mut push = |part: Option<&[f64]>, name: &str, len: usize| -> Result<()> {
            let v = part.ok_or_else(|| {
                Error::InvalidArgument(format!("policy input is missing its {name} part"))
            })?;
            if v.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    actual: v.len(),
                });
            }
            out.extend_from_slice(v);
            Ok(())
        };
        if self.obs_text {
            push(input.obs.map(|e| e.values()), "observation", embed_dim)?;
        }
        if self.thought {
            push(input.thought.map(|e| e.values()), "thought", embed_dim)?;
        }
        if self.symbolic {
            push(input.symbolic, "symbolic", symbolic_len)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PolicyInput<'a> {
    pub obs: Option<&'a EmbeddingVector>,
    pub thought: Option<&'a EmbeddingVector>,
    pub symbolic: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionPolicyConfig {
    pub input: InputSpec,
    pub hidden: usize,
    /// Init gain of the policy output layer; 0 starts exactly uniform.
    pub output_gain: f64,
    pub learning_rate: f64,
    pub value_learning_rate: f64,
    pub gamma_i: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub prob_floor: f64,
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<f64>,
    /// Adds `g * <thought, embed(action phrase)>` to each action logit.
    pub grounding: bool,
    pub grounding_init: f64,
    /// Train the grounding weight with PPO; otherwise it stays a fixed prior.
    pub learn_grounding: bool,
}

impl Default for ActionPolicyConfig {
    fn default() -> Self {
        ActionPolicyConfig {
            input: InputSpec::default(),
            hidden: 64,
            output_gain: 0.01,
            learning_rate: 1e-3,
            value_learning_rate: 1e-3,
            gamma_i: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatch_size: 64,
            prob_floor: 1e-6,
            normalize_advantages: true,
            max_grad_norm: Some(0.5),
            grounding: true,
            grounding_init: 16.0,
            learn_grounding: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPolicyParams {
    pub policy: Mlp,
    pub value: Mlp,
    pub grounding: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl ActionDistribution {
    /// `(1 - n eps) softmax(z) + eps`.
    pub fn from_logits(logits: &[f64], floor: f64) -> Self {
        let n = logits.len() as f64;
        let probs: Vec<f64> = softmax(logits)
            .into_iter()
            .map(|p| (1.0 - n * floor) * p + floor)
            .collect();
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        ActionDistribution { probs, log_probs }
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }
}

/// `-sum p ln p`, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// `G_t = sum_{i>=t} gamma^(i-t) r_i`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    crate::prompt::reward_to_go(rewards, gamma)
}

/// Generalized advantage estimates for one episode; the last step is
/// terminal (truncation included).
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    adv
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub entropy: f64,
    pub distribution: ActionDistribution,
}

/// One stored transition as consumed by PPO.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub features: Vec<f64>,
    pub grounding: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub reward: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoStats {
    pub samples: usize,
    /// Clipped surrogate on the whole batch before any update.
    pub initial_surrogate: f64,
    /// Full-batch value loss before the first epoch and after each epoch.
    pub value_losses: Vec<f64>,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

#[derive(Debug, Clone)]
pub struct ActionPolicy {
    config: ActionPolicyConfig,
    params: ActionPolicyParams,
    n_actions: usize,
    phrases: Vec<EmbeddingVector>,
    policy_opt: Adam,
    value_opt: Adam,
}

impl ActionPolicy {
    /// `phrases` holds one embedded phrase per action for the grounding
    /// term; it may be empty when grounding is off or thoughts are unused.
    pub fn new(
        config: ActionPolicyConfig,
        input_dim: usize,
        n_actions: usize,
        phrases: Vec<EmbeddingVector>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if input_dim == 0 || n_actions == 0 || config.hidden == 0 {
            return Err(Error::Config(
                "action policy dimensions must be positive".into(),
            ));
        }
        let mut policy = Mlp::new(
            &[input_dim, config.hidden, config.hidden, n_actions],
            config.output_gain,
            rng,
        );
        if config.output_gain == 0.0 {
            policy.zero_output_layer();
        }
        let value = Mlp::new(&[input_dim, config.hidden, config.hidden, 1], 1.0, rng);
        let grounding = if config.grounding {
            config.grounding_init
        } else {
            0.0
        };
        Self::with_params(
            config,
            ActionPolicyParams {
                policy,
                value,
                grounding,
            },
            phrases,
        )
    }

    pub fn with_params(
        config: ActionPolicyConfig,
        params: ActionPolicyParams,
        phrases: Vec<EmbeddingVector>,
    ) -> Result<Self> {
        let n_actions = params.policy.output_dim();
        if params.value.input_dim() != params.policy.input_dim() || params.value.output_dim() != 1 {
            return Err(Error::CheckpointMismatch(
                "value and policy networks disagree".into(),
            ));
        }
        if config.grounding && !phrases.is_empty() && phrases.len() != n_actions {
            return Err(Error::Config(format!(
                "grounding needs one phrase per action ({n_actions}), got {}",
                phrases.len()
            )));
        }
        if !(config.prob_floor >= 0.0 && config.prob_floor * (n_actions as f64) < 1.0) {
            return Err(Error::Config(
                "prob_floor must satisfy 0 <= n * floor < 1".into(),
            ));
        }
        Ok(ActionPolicy {
            policy_opt: Adam::new(params.policy.param_count() + 1),
            value_opt: Adam::new(params.value.param_count()),
            config,
            params,
            n_actions,
            phrases,
        })
    }

    pub fn config(&self) -> &ActionPolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &ActionPolicyParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ActionPolicyParams {
        &mut self.params
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn input_dim(&self) -> usize {
        self.params.policy.input_dim()
    }

    fn grounding_active(&self) -> bool {
        self.config.grounding && !self.phrases.is_empty()
    }

    /// Per-action similarity between the thought and each action phrase;
    /// zeros when grounding is inactive.
    pub fn grounding_scores(&self, thought: Option<&EmbeddingVector>) -> Vec<f64> {
        match thought {
            Some(t) if self.grounding_active() => self.phrases.iter().map(|p| p.dot(t)).collect(),
            _ => vec![0.0; self.n_actions],
        }
    }

    fn check(&self, features: &[f64], grounding: &[f64]) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: features.len(),
            });
        }
        if grounding.len() != self.n_actions {
            return Err(Error::DimensionMismatch {
                expected: self.n_actions,
                actual: grounding.len(),
            });
        }
        Ok(())
    }

    fn logits(&self, net_out: &[f64], grounding: &[f64]) -> Vec<f64> {
        net_out
            .iter()
            .zip(grounding)
            .map(|(z, s)| z + self.params.grounding * s)
            .collect()
    }

    pub fn distribution(&self, features: &[f64], grounding: &[f64]) -> Result<ActionDistribution> {
        self.check(features, grounding)?;
        let out = self.params.policy.output(features);
        Ok(ActionDistribution::from_logits(
            &self.logits(&out, grounding),
            self.config.prob_floor,
        ))
    }

    pub fn entropy(&self, features: &[f64], grounding: &[f64]) -> Result<f64> {
        Ok(self.distribution(features, grounding)?.entropy())
    }

    pub fn value(&self, features: &[f64]) -> f64 {
        self.params.value.output(features)[0]
    }

    pub fn act(
        &self,
        features: &[f64],
        grounding: &[f64],
        rng: &mut impl Rng,
    ) -> Result<ActionSample> {
        let distribution = self.distribution(features, grounding)?;
        let action = sample_categorical(&distribution.probs, rng);
        Ok(ActionSample {
            action,
            log_prob: distribution.log_probs[action],
            value: self.value(features),
            entropy: distribution.entropy(),
            distribution,
        })
    }

    /// Most probable action (lowest index on ties).
    pub fn greedy(&self, features: &[f64], grounding: &[f64]) -> Result<usize> {
        let d = self.distribution(features, grounding)?;
        let mut best = 0;
        for (a, p) in d.probs.iter().enumerate() {
            if *p > d.probs[best] {
                best = a;
            }
        }
        Ok(best)
    }

    /// Policy parameters as one vector: network weights, then the grounding
    /// scale.
    pub fn policy_vector(&self) -> Vec<f64> {
        let mut v = self.params.policy.params().to_vec();
        v.push(self.params.grounding);
        v
    }

    pub fn set_policy_vector(&mut self, v: &[f64]) {
        let n = self.params.policy.param_count();
        self.params.policy.params_mut().copy_from_slice(&v[..n]);
        self.params.grounding = v[n];
    }

    fn ratio_term(&self, ratio: f64, adv: f64) -> (f64, bool) {
        let eps = self.config.clip_eps;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
        let active = (adv >= 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps);
        ((ratio * adv).min(clipped * adv), active)
    }

    /// Mean clipped surrogate `E[min(rho A, clip(rho) A)]` over `batch`.
    pub fn surrogate(&self, batch: &[&PpoSample], advantages: &[f64]) -> f64 {
        let mut total = 0.0;
        for (s, &adv) in batch.iter().zip(advantages) {
            let out = self.params.policy.output(&s.features);
            let d = ActionDistribution::from_logits(
                &self.logits(&out, &s.grounding),
                self.config.prob_floor,
            );
            let ratio = (d.log_probs[s.action] - s.old_log_prob).exp();
            total += self.ratio_term(ratio, adv).0;
        }
        total / batch.len() as f64
    }

    /// Gradient of [`Self::surrogate`] over [`Self::policy_vector`], plus
    /// the fraction of clipped samples and the mean approximate KL.
    pub fn surrogate_gradient(
        &self,
        batch: &[&PpoSample],
        advantages: &[f64],
    ) -> (Vec<f64>, f64, f64) {
        let n_params = self.params.policy.param_count();
        let mut grad = vec![0.0; n_params + 1];
        let scale = 1.0 / batch.len() as f64;
        let keep = 1.0 - self.n_actions as f64 * self.config.prob_floor;
        let (mut clipped, mut kl) = (0usize, 0.0);
        for (s, &adv) in batch.iter().zip(advantages) {
            let trace = self.params.policy.forward(&s.features);
            let logits = self.logits(trace.output(), &s.grounding);
            let sigma = softmax(&logits);
            let pi_a = keep * sigma[s.action] + self.config.prob_floor;
            let log_ratio = pi_a.ln() - s.old_log_prob;
            let ratio = log_ratio.exp();
            kl += (ratio - 1.0) - log_ratio;
            let (_, active) = self.ratio_term(ratio, adv);
            if active {
                clipped += 1;
                continue;
            }
            // d obj / d log pi_a = rho A; d log pi_a / d z_j = keep sigma_a (delta_aj - sigma_j) / pi_a
            let c = scale * ratio * adv * keep * sigma[s.action] / pi_a;
            let grad_z: Vec<f64> = (0..self.n_actions)
                .map(|j| c * ((j == s.action) as u8 as f64 - sigma[j]))
                .collect();
            self.params
                .policy
                .backward(&trace, &grad_z, &mut grad[..n_params]);
            grad[n_params] += grad_z
                .iter()
                .zip(&s.grounding)
                .map(|(g, x)| g * x)
                .sum::<f64>();
        }
        if !(self.grounding_active() && self.config.learn_grounding) {
            grad[n_params] = 0.0;
        }
        (grad, clipped as f64 * scale, kl * scale)
    }

    fn value_loss(&self, samples: &[&PpoSample], returns: &[f64]) -> f64 {
        samples
            .iter()
            .zip(returns)
            .map(|(s, g)| 0.5 * (self.value(&s.features) - g).powi(2))
            .sum::<f64>()
            / samples.len() as f64
    }

    /// Clipped PPO on complete episodes; advantages by GAE, value network
    /// regressed on discounted returns.
    pub fn ppo_update(
        &mut self,
        episodes: &[Vec<PpoSample>],
        rng: &mut impl Rng,
    ) -> Result<PpoStats> {
        check_gamma(self.config.gamma_i)?;
        let samples: Vec<&PpoSample> = episodes.iter().flatten().collect();
        if samples.is_empty() {
            return Err(Error::InvalidArgument("PPO buffer is empty".into()));
        }
        let mut advantages = Vec::with_capacity(samples.len());
        let mut returns = Vec::with_capacity(samples.len());
        for ep in episodes.iter().filter(|e| !e.is_empty()) {
            let rewards: Vec<f64> = ep.iter().map(|s| s.reward).collect();
            let values: Vec<f64> = ep.iter().map(|s| s.value).collect();
            advantages.extend(gae(
                &rewards,
                &values,
                self.config.gamma_i,
                self.config.gae_lambda,
            ));
            returns.extend(discounted_return(&rewards, self.config.gamma_i)?);
        }
        if self.config.normalize_advantages && advantages.len() > 1 {
            let n = advantages.len() as f64;
            let mean = advantages.iter().sum::<f64>() / n;
            let std = (advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            advantages
                .iter_mut()
                .for_each(|a| *a = (*a - mean) / (std + 1e-8));
        }
        if let Some(i) = advantages
            .iter()
            .chain(&returns)
            .position(|v| !v.is_finite())
        {
            return Err(Error::non_finite(
                "PPO targets",
                format!("entry {i} of advantages/returns"),
            ));
        }

        let initial_surrogate = self.surrogate(&samples, &advantages);
        let mut value_losses = vec![self.value_loss(&samples, &returns)];
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let (mut clip_sum, mut kl_sum, mut batches) = (0.0, 0.0, 0usize);
        let mb = self.config.minibatch_size.max(1);
        for _ in 0..self.config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(mb) {
                let batch: Vec<&PpoSample> = chunk.iter().map(|&i| samples[i]).collect();
                let adv: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
                let (grad, clip_frac, kl) = self.surrogate_gradient(&batch, &adv);
                let mut descent: Vec<f64> = grad.iter().map(|g| -g).collect();
                self.step_policy(&mut descent)?;
                clip_sum += clip_frac;
                kl_sum += kl;
                batches += 1;

                let mut vgrad = vec![0.0; self.params.value.param_count()];
                let scale = 1.0 / batch.len() as f64;
                for (s, &i) in batch.iter().zip(chunk) {
                    let trace = self.params.value.forward(&s.features);
                    let err = trace.output()[0] - returns[i];
                    self.params
                        .value
                        .backward(&trace, &[err * scale], &mut vgrad);
                }
                if let Some(max) = self.config.max_grad_norm {
                    clip_grad_norm(&mut vgrad, max);
                }
                check_finite("value gradient", &vgrad)?;
                self.value_opt.step(
                    self.params.value.params_mut(),
                    &vgrad,
                    self.config.value_learning_rate,
                );
            }
            let loss = self.value_loss(&samples, &returns);
            if !loss.is_finite() {
                return Err(Error::non_finite(
                    "value loss",
                    format!("{loss} after epoch"),
                ));
            }
            value_losses.push(loss);
        }
        Ok(PpoStats {
            samples: samples.len(),
            initial_surrogate,
            value_losses,
            clip_fraction: if batches > 0 {
                clip_sum / batches as f64
            } else {
                0.0
            },
            approx_kl: if batches > 0 {
                kl_sum / batches as f64
            } else {
                0.0
            },
        })
    }

    fn step_policy(&mut self, descent: &mut [f64]) -> Result<()> {
        if let Some(max) = self.config.max_grad_norm {
            clip_grad_norm(descent, max);
        }
        check_finite("policy gradient", descent)?;
        let mut v = self.policy_vector();
        self.policy_opt
            .step(&mut v, descent, self.config.learning_rate);
        self.set_policy_vector(&v);
        Ok(())
    }
}

fn check_finite(context: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::non_finite(
            context,
            format!("component {i} of {} is {}", v.len(), v[i]),
        )),
        None => Ok(()),
    }
}
