use rand::Rng;
use serde::{Deserialize, Serialize};

use super::candidates::PromptCandidate;
use crate::embed::{embed_history, EmbeddingProvider, EmbeddingVector};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::{l2_norm, log_sum_exp, softmax, Adam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    Dot,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptPolicyConfig {
    pub projection_dim: usize,
    pub similarity: Similarity,
    /// Half-width of the uniform projector init; defaults to 1/sqrt(d).
    pub init_scale: Option<f64>,
    pub initial_temperature: f64,
    pub learn_temperature: bool,
    /// Number of past observations encoded besides the current one.
    pub history_window: usize,
    pub baseline: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Episodes collected before the first update; the selector stays at
    /// its initial distribution while the action policy starts learning.
    pub warmup_episodes: usize,
    /// Subtract the running mean of seen history embeddings and rescale to
    /// unit norm before projecting, so situation-specific features are not
    /// swamped by text every observation shares.
    pub center_history: bool,
}

impl Default for PromptPolicyConfig {
    fn default() -> Self {
        PromptPolicyConfig {
            projection_dim: 64,
            similarity: Similarity::Dot,
            init_scale: None,
            initial_temperature: 1.0,
            learn_temperature: true,
            history_window: 0,
            baseline: true,
            learning_rate: 0.003,
            epochs: 1,
            warmup_episodes: 480,
            center_history: true,
        }
    }
}

/// Flat parameter block: prompt projector (m x d), observation projector
/// (m x d), then the log temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPolicyParams {
    pub input_dim: usize,
    pub proj_dim: usize,
    pub data: Vec<f64>,
}

impl PromptPolicyParams {
    fn block(&self) -> usize {
        self.input_dim * self.proj_dim
    }

    pub fn proj_prompt(&self) -> &[f64] {
        &self.data[..self.block()]
    }

    pub fn proj_obs(&self) -> &[f64] {
        &self.data[self.block()..2 * self.block()]
    }

    pub fn log_temperature(&self) -> f64 {
        self.data[2 * self.block()]
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature().exp()
    }

    fn log_temperature_index(&self) -> usize {
        2 * self.block()
    }
}

/// Running mean of history embeddings used by the centering encoder.
/// Statistics, not trained parameters: the gradient never touches them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryNormalizer {
    pub mean: Vec<f64>,
    pub count: u64,
}

impl HistoryNormalizer {
    pub fn new(dim: usize) -> Self {
        HistoryNormalizer {
            mean: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn observe(&mut self, x: &[f64]) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (m, v) in self.mean.iter_mut().zip(x) {
            *m += (v - *m) * w;
        }
    }

    /// `(x - mean) / |x - mean|`; the raw vector before any observation and
    /// the zero vector when `x` equals the mean.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.count == 0 {
            return x.to_vec();
        }
        let mut out: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        let norm = l2_norm(&out);
        if norm > 1e-9 {
            out.iter_mut().for_each(|v| *v /= norm);
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptDecision {
    pub prompt_id: usize,
    pub log_prob: f64,
    pub distribution: Vec<f64>,
}

/// One outer-loop step as consumed by [`PromptPolicy::pg_update`].
#[derive(Debug, Clone)]
pub struct PromptStep {
    pub history: EmbeddingVector,
    pub prompt_id: usize,
    pub log_prob: f64,
    /// Per-step outer reward: `-h` for the entropy objective, the env
    /// reward for the env objective.
    pub reward: f64,
}

/// A history embedding, chosen prompt and scalar weight on its log-prob.
#[derive(Debug, Clone)]
pub struct WeightedChoice<'a> {
    pub history: &'a EmbeddingVector,
    pub prompt_id: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgStats {
    pub steps: usize,
    pub mean_return: f64,
    pub baseline: f64,
    pub grad_norm: f64,
}

/// Discounted return-to-go of a per-step reward sequence.
pub fn reward_to_go(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// Outer return-to-go `-sum_{i>=t} gamma^(i-t) h_i` for action-policy
/// entropies `h_i >= 0`.
pub fn entropy_return_to_go(entropies: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut r = reward_to_go(entropies, gamma)?;
    r.iter_mut().for_each(|v| *v = -*v);
    Ok(r)
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discount must lie in [0, 1), got {gamma}"
        )));
    }
    Ok(())
}

/// Mean that is exact when every value is equal.
fn stable_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

/// Sparse-aware `M e` for a row-major `rows x cols` matrix.
fn project(matrix: &[f64], rows: usize, cols: usize, e: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for (c, &v) in e.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o += matrix[r * cols + c] * v;
        }
    }
    out
}

/// `grad += coeff ⊗ e`, skipping zero entries of `e`.
fn add_outer(grad: &mut [f64], cols: usize, coeff: &[f64], e: &[f64]) {
    for (c, &v) in e.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (r, &k) in coeff.iter().enumerate() {
            grad[r * cols + c] += k * v;
        }
    }
}

/// Projected-similarity softmax over a fixed prompt candidate set.
#[derive(Debug, Clone)]
pub struct PromptPolicy {
    config: PromptPolicyConfig,
    candidates: Vec<PromptCandidate>,
    params: PromptPolicyParams,
    normalizer: HistoryNormalizer,
    optimizer: Adam,
}

struct Projected {
    prompts: Vec<Vec<f64>>,
    prompt_norms: Vec<f64>,
}

impl PromptPolicy {
    pub fn new(
        candidates: Vec<PromptCandidate>,
        config: PromptPolicyConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = Self::check_candidates(&candidates)?;
        if config.projection_dim == 0 {
            return Err(Error::Config("projection_dim must be positive".into()));
        }
        if !(config.initial_temperature > 0.0) {
            return Err(Error::Config("initial_temperature must be positive".into()));
        }
        let m = config.projection_dim;
        let scale = config.init_scale.unwrap_or(1.0 / (d as f64).sqrt());
        let mut data: Vec<f64> = (0..2 * m * d)
            .map(|_| {
                if scale > 0.0 {
                    rng.random_range(-scale..scale)
                } else {
                    0.0
                }
            })
            .collect();
        data.push(config.initial_temperature.ln());
        let params = PromptPolicyParams {
            input_dim: d,
            proj_dim: m,
            data,
        };
        Ok(PromptPolicy {
            optimizer: Adam::new(params.data.len()),
            normalizer: HistoryNormalizer::new(d),
            config,
            candidates,
            params,
        })
    }

    pub fn with_params(
        candidates: Vec<PromptCandidate>,
        config: PromptPolicyConfig,
        params: PromptPolicyParams,
    ) -> Result<Self> {
        let d = Self::check_candidates(&candidates)?;
        if params.input_dim != d || params.data.len() != 2 * d * params.proj_dim + 1 {
            return Err(Error::CheckpointMismatch(format!(
                "prompt policy parameters do not fit {d}-dimensional candidates"
            )));
        }
        Ok(PromptPolicy {
            optimizer: Adam::new(params.data.len()),
            normalizer: HistoryNormalizer::new(d),
            config,
            candidates,
            params,
        })
    }

    fn check_candidates(candidates: &[PromptCandidate]) -> Result<usize> {
        let first = candidates
            .first()
            .ok_or_else(|| Error::Config("prompt candidate set is empty".into()))?;
        let d = first.embedding.dim();
        for (i, c) in candidates.iter().enumerate() {
            if c.id != i {
                return Err(Error::Config("prompt candidate ids must be dense".into()));
            }
            if c.embedding.dim() != d || c.embedding.provider_id() != first.embedding.provider_id()
            {
                return Err(Error::Config(
                    "prompt candidates must share one embedding provider".into(),
                ));
            }
        }
        Ok(d)
    }

    pub fn config(&self) -> &PromptPolicyConfig {
        &self.config
    }

    pub fn candidates(&self) -> &[PromptCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn params(&self) -> &PromptPolicyParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut PromptPolicyParams {
        &mut self.params
    }

    pub fn normalizer(&self) -> &HistoryNormalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: HistoryNormalizer) -> Result<()> {
        if normalizer.mean.len() != self.params.input_dim {
            return Err(Error::CheckpointMismatch(
                "history normalizer dimension differs".into(),
            ));
        }
        self.normalizer = normalizer;
        Ok(())
    }

    /// Folds history embeddings into the centering statistics.
    pub fn observe_histories<'a>(
        &mut self,
        histories: impl IntoIterator<Item = &'a EmbeddingVector>,
    ) {
        for h in histories {
            self.normalizer.observe(h.values());
        }
    }

    /// Encoder output fed to the observation projector.
    fn encode(&self, history: &EmbeddingVector) -> Vec<f64> {
        if self.config.center_history {
            self.normalizer.apply(history.values())
        } else {
            history.values().to_vec()
        }
    }

    fn check_history(&self, history: &EmbeddingVector) -> Result<()> {
        if history.dim() != self.params.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.params.input_dim,
                actual: history.dim(),
            });
        }
        let provider = self.candidates[0].embedding.provider_id();
        if history.provider_id() != provider {
            return Err(Error::InvalidArgument(format!(
                "history embedded by {:?}, candidates by {provider:?}",
                history.provider_id()
            )));
        }
        Ok(())
    }

    fn projected(&self) -> Projected {
        let (m, d) = (self.params.proj_dim, self.params.input_dim);
        let prompts: Vec<Vec<f64>> = self
            .candidates
            .iter()
            .map(|c| project(self.params.proj_prompt(), m, d, c.embedding.values()))
            .collect();
        let prompt_norms = prompts.iter().map(|a| l2_norm(a)).collect();
        Projected {
            prompts,
            prompt_norms,
        }
    }

    fn scores_with(&self, proj: &Projected, history: &EmbeddingVector) -> (Vec<f64>, Vec<f64>) {
        let (m, d) = (self.params.proj_dim, self.params.input_dim);
        let b = project(self.params.proj_obs(), m, d, &self.encode(history));
        let tau = self.params.temperature();
        let nb = l2_norm(&b).max(1e-12);
        let scores = proj
            .prompts
            .iter()
            .zip(&proj.prompt_norms)
            .map(|(a, &na)| {
                let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
                match self.config.similarity {
                    Similarity::Dot => dot / tau,
                    Similarity::Cosine => dot / (na.max(1e-12) * nb) / tau,
                }
            })
            .collect();
        (scores, b)
    }

    /// Similarity scores `s_i` (already divided by the temperature).
    pub fn scores(&self, history: &EmbeddingVector) -> Result<Vec<f64>> {
        self.check_history(history)?;
        Ok(self.scores_with(&self.projected(), history).0)
    }

    pub fn distribution(&self, history: &EmbeddingVector) -> Result<Vec<f64>> {
        Ok(softmax(&self.scores(history)?))
    }

    pub fn sample_embedded(
        &self,
        history: &EmbeddingVector,
        rng: &mut impl Rng,
    ) -> Result<PromptDecision> {
        let scores = self.scores(history)?;
        let distribution = softmax(&scores);
        let prompt_id = sample_categorical(&distribution, rng);
        let log_prob = scores[prompt_id] - log_sum_exp(&scores);
        Ok(PromptDecision {
            prompt_id,
            log_prob,
            distribution,
        })
    }

    /// Embeds the configured history window and samples a prompt.
    pub fn sample(
        &self,
        provider: &dyn EmbeddingProvider,
        history: &[Observation],
        rng: &mut impl Rng,
    ) -> Result<(PromptDecision, EmbeddingVector)> {
        let embedded = embed_history(provider, history, self.config.history_window)?;
        let decision = self.sample_embedded(&embedded, rng)?;
        Ok((decision, embedded))
    }

    /// `sum_k w_k log pi(p_k | h_k)`.
    pub fn surrogate(&self, choices: &[WeightedChoice<'_>]) -> Result<f64> {
        let proj = self.projected();
        let mut total = 0.0;
        for c in choices {
            self.check_history(c.history)?;
            let (scores, _) = self.scores_with(&proj, c.history);
            total += c.weight * (scores[c.prompt_id] - log_sum_exp(&scores));
        }
        Ok(total)
    }

    /// Gradient of [`Self::surrogate`] with respect to the flat parameters.
    pub fn surrogate_gradient(&self, choices: &[WeightedChoice<'_>]) -> Result<Vec<f64>> {
        let (m, d) = (self.params.proj_dim, self.params.input_dim);
        let k = self.candidates.len();
        let tau = self.params.temperature();
        let proj = self.projected();
        let mut grad = vec![0.0; self.params.data.len()];
        let mut prompt_coeffs = vec![vec![0.0; m]; k];
        let mut log_tau_grad = 0.0;
        let block = m * d;

        for c in choices {
            self.check_history(c.history)?;
            if c.prompt_id >= k {
                return Err(Error::InvalidArgument(format!(
                    "prompt id {} out of range for {k} candidates",
                    c.prompt_id
                )));
            }
            if c.weight == 0.0 {
                continue;
            }
            let (scores, b) = self.scores_with(&proj, c.history);
            let pi = softmax(&scores);
            let nb = l2_norm(&b).max(1e-12);
            let mut obs_coeff = vec![0.0; m];
            for i in 0..k {
                let g = c.weight * ((i == c.prompt_id) as u8 as f64 - pi[i]);
                if g == 0.0 {
                    continue;
                }
                log_tau_grad -= g * scores[i];
                let a = &proj.prompts[i];
                match self.config.similarity {
                    Similarity::Dot => {
                        for r in 0..m {
                            prompt_coeffs[i][r] += g * b[r] / tau;
                            obs_coeff[r] += g * a[r] / tau;
                        }
                    }
                    Similarity::Cosine => {
                        let na = proj.prompt_norms[i].max(1e-12);
                        let cos = scores[i] * tau;
                        for r in 0..m {
                            let dc_da = b[r] / (na * nb) - cos * a[r] / (na * na);
                            let dc_db = a[r] / (na * nb) - cos * b[r] / (nb * nb);
                            prompt_coeffs[i][r] += g * dc_da / tau;
                            obs_coeff[r] += g * dc_db / tau;
                        }
                    }
                }
            }
            add_outer(
                &mut grad[block..2 * block],
                d,
                &obs_coeff,
                &self.encode(c.history),
            );
        }
        for (i, coeff) in prompt_coeffs.iter().enumerate() {
            add_outer(
                &mut grad[..block],
                d,
                coeff,
                self.candidates[i].embedding.values(),
            );
        }
        if self.config.learn_temperature {
            grad[self.params.log_temperature_index()] = log_tau_grad;
        }
        Ok(grad)
    }

    /// One optimizer step up the gradient.
    pub fn ascend(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::non_finite(
                "prompt-policy gradient",
                format!("component {i} of {} is {}", grad.len(), grad[i]),
            ));
        }
        let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
        self.optimizer.step(&mut self.params.data, &descent, lr);
        Ok(())
    }

    /// Score-function update on a batch of trajectories:
    /// `(1/N) sum_tau sum_t grad log pi(p_t | h_t) (R_t - b)`.
    pub fn pg_update(
        &mut self,
        trajectories: &[Vec<PromptStep>],
        gamma: f64,
        learning_rate: f64,
    ) -> Result<PgStats> {
        check_gamma(gamma)?;
        if trajectories.iter().all(|t| t.is_empty()) {
            return Err(Error::InvalidArgument(
                "policy-gradient batch is empty".into(),
            ));
        }
        let returns: Vec<Vec<f64>> = trajectories
            .iter()
            .map(|t| reward_to_go(&t.iter().map(|s| s.reward).collect::<Vec<_>>(), gamma))
            .collect::<Result<_>>()?;
        let flat: Vec<f64> = returns.iter().flatten().copied().collect();
        let mean_return = stable_mean(&flat);
        let baseline = if self.config.baseline {
            mean_return
        } else {
            0.0
        };
        let n = trajectories.len() as f64;
        let choices: Vec<WeightedChoice<'_>> = trajectories
            .iter()
            .zip(&returns)
            .flat_map(|(traj, rets)| {
                traj.iter().zip(rets).map(move |(s, r)| WeightedChoice {
                    history: &s.history,
                    prompt_id: s.prompt_id,
                    weight: (r - baseline) / n,
                })
            })
            .collect();
        let grad = self.surrogate_gradient(&choices)?;
        let grad_norm = l2_norm(&grad);
        self.ascend(&grad, learning_rate)?;
        if let Some(i) = self.params.data.iter().position(|p| !p.is_finite()) {
            return Err(Error::non_finite(
                "prompt-policy parameters",
                format!("parameter {i} after update (grad norm {grad_norm})"),
            ));
        }
        Ok(PgStats {
            steps: flat.len(),
            mean_return,
            baseline,
            grad_norm,
        })
    }
}

pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
