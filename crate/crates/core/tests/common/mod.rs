//! Shared fixtures and independent oracles for the integration tests.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use bilevel_cot::env::{
    Action, ChainState, ChainWorld, ChainWorldConfig, Environment, Overcooked, OvercookedConfig,
    RewardSide, TraceRecord, TraceWriter,
};
use bilevel_cot::harness::{self, Overrides, Resolved};
use bilevel_cot::action::{ActionPolicy, ActionPolicyConfig, PpoSample};
use bilevel_cot::embed::{EmbeddingProvider, EmbeddingVector, HashingEmbedder};
use bilevel_cot::prompt::{
    CandidateFile, PromptCandidate, PromptPolicy, PromptPolicyConfig, Similarity, WeightedChoice,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn core_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn config_path(name: &str) -> PathBuf {
    core_dir().join("configs").join(format!("{name}.json"))
}

pub fn data_path(rel: &str) -> PathBuf {
    core_dir().join("data").join(rel)
}

/// Loads a shipped config with `key=value` overrides.
pub fn load_config(name: &str, set: &[(&str, &str)]) -> Resolved {
    let overrides = Overrides {
        set: set
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        ..Default::default()
    };
    harness::load(&config_path(name), &overrides).expect("shipped config loads")
}

/// Central difference of `f` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Checks `analytic` against central differences on every coordinate with
/// tolerance `max(1e-5, 1e-3 |g|)`. Returns the worst (index, analytic,
/// numeric) triple on failure.
pub fn check_gradient(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
) -> Result<usize, (usize, f64, f64)> {
    assert_eq!(x.len(), analytic.len());
    for (i, &g) in analytic.iter().enumerate() {
        let numeric = central_difference(&f, x, i, h);
        if (numeric - g).abs() > (1e-3 * g.abs()).max(1e-5) {
            return Err((i, g, numeric));
        }
    }
    Ok(x.len())
}

/// Value iteration on a ChainWorld, using the environment purely as a
/// one-step model. Returns optimal undiscounted values and greedy actions
/// per position for the given rewarded side.
pub fn chain_value_iteration(config: &ChainWorldConfig, side: RewardSide) -> (Vec<f64>, Vec<usize>) {
    let n = config.length;
    let mut env = ChainWorld::new(config.clone()).unwrap();
    // (reward, next position, terminal) for each (position, action)
    let mut model = vec![[(0.0, 0usize, true); 2]; n];
    for (p, row) in model.iter_mut().enumerate().take(n - 1).skip(1) {
        for (a, slot) in row.iter_mut().enumerate() {
            env.set_state(ChainState {
                position: p,
                rewarded: side,
                steps: 0,
                done: false,
            })
            .unwrap();
            let out = env.step(Action(a)).unwrap();
            *slot = (out.reward, env.state().position, out.done);
        }
    }
    let mut v = vec![0.0; n];
    for _ in 0..10 * n {
        let mut next = v.clone();
        for p in 1..n - 1 {
            next[p] = model[p]
                .iter()
                .map(|&(r, q, done)| r + if done { 0.0 } else { v[q] })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        if next == v {
            break;
        }
        v = next;
    }
    let greedy = (0..n)
        .map(|p| {
            if p == 0 || p == n - 1 {
                return 0;
            }
            let q = |a: usize| {
                let (r, q, done) = model[p][a];
                r + if done { 0.0 } else { v[q] }
            };
            if q(1) > q(0) {
                1
            } else {
                0
            }
        })
        .collect();
    (v, greedy)
}

/// Closed-form optimum from an interior position: walk straight to the
/// rewarded end, paying the move penalty on every non-terminal step.
pub fn chain_analytic_optimum(config: &ChainWorldConfig, side: RewardSide, p: usize) -> f64 {
    let dist = match side {
        RewardSide::Left => p,
        RewardSide::Right => config.length - 1 - p,
    };
    config.high_reward + (dist as f64 - 1.0) * config.move_penalty
}

/// A request seen by [`MockServer`].
#[derive(Debug, Clone)]
pub struct SeenRequest {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

/// Handler result: HTTP status and JSON body.
pub type Reply = (u16, serde_json::Value);

/// Minimal blocking HTTP/1.1 server answering JSON POSTs, one request per
/// connection.
pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    seen: Arc<Mutex<Vec<SeenRequest>>>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> MockServer
    where
        F: Fn(&SeenRequest) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let seen = Arc::new(Mutex::new(Vec::new()));
        let (h, s) = (hits.clone(), seen.clone());
        let handler = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (h, s, handler) = (h.clone(), s.clone(), handler.clone());
                thread::spawn(move || {
                    if let Some(req) = read_request(&stream) {
                        h.fetch_add(1, Ordering::SeqCst);
                        let (status, body) = handler(&req);
                        s.lock().unwrap().push(req);
                        write_reply(stream, status, &body);
                    }
                });
            }
        });
        MockServer { url, hits, seen }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<SeenRequest> {
        self.seen.lock().unwrap().clone()
    }
}

fn read_request(stream: &TcpStream) -> Option<SeenRequest> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut headers = Vec::new();
    let mut len = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
            if k == "content-length" {
                len = v.parse().ok()?;
            }
            headers.push((k, v));
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(SeenRequest {
        path,
        headers,
        body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
    })
}

fn write_reply(mut stream: TcpStream, status: u16, body: &serde_json::Value) {
    let text = body.to_string();
    let reason = if status == 200 { "OK" } else { "Error" };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.flush();
}

/// Chat-completions response body with one message.
pub fn chat_reply(content: &str) -> serde_json::Value {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
}

pub fn read_to_string(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Embeds `texts` as dense candidates with `provider`.
pub fn candidates_from(provider: &dyn EmbeddingProvider, texts: &[&str]) -> Vec<PromptCandidate> {
    texts
        .iter()
        .enumerate()
        .map(|(id, t)| PromptCandidate {
            id,
            text: t.to_string(),
            embedding: provider.embed(t).unwrap(),
        })
        .collect()
}

/// A learned prompt policy over the shipped ChainWorld candidates with a
/// width-16 projection, plus a few embedded histories it has observed.
pub fn small_prompt_policy(similarity: Similarity, seed: u64) -> (PromptPolicy, Vec<EmbeddingVector>) {
    let embedder = HashingEmbedder::new(64, 2).unwrap();
    let candidates = CandidateFile::load(&data_path("prompts/chainworld.json"))
        .unwrap()
        .embed(&embedder)
        .unwrap();
    let config = PromptPolicyConfig {
        projection_dim: 16,
        similarity,
        init_scale: Some(0.4),
        initial_temperature: 0.7,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = PromptPolicy::new(candidates, config, &mut rng).unwrap();
    let histories: Vec<EmbeddingVector> = [
        "You are at position 3 of 10. The reward is on the left.",
        "You are at position 7 of 10. The reward is on the right.",
        "You are at position 5 of 10.",
        "Walls everywhere and a goal somewhere",
    ]
    .iter()
    .map(|t| embedder.embed(t).unwrap())
    .collect();
    policy.observe_histories(&histories);
    (policy, histories)
}

/// Finite-difference check of the prompt-policy surrogate gradient on
/// every parameter, with mixed-sign weights.
pub fn prompt_gradient_check(similarity: Similarity, seed: u64) -> Result<usize, (usize, f64, f64)> {
    let (policy, histories) = small_prompt_policy(similarity, seed);
    let weights = [1.3, -0.7, 0.4, 2.0, -1.1, 0.25];
    let choices: Vec<WeightedChoice<'_>> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| WeightedChoice {
            history: &histories[i % histories.len()],
            prompt_id: i % policy.len(),
            weight: w,
        })
        .collect();
    let analytic = policy.surrogate_gradient(&choices).unwrap();
    let x = policy.params().data.clone();
    let f = |v: &[f64]| {
        let mut p = policy.clone();
        p.params_mut().data.copy_from_slice(v);
        p.surrogate(&choices).unwrap()
    };
    check_gradient(f, &x, &analytic, 1e-6)
}

/// A width-16 action policy with a learnable grounding scale and a batch
/// whose behavior log-probs are perturbed so some samples clip.
pub fn small_ppo_problem(seed: u64) -> (ActionPolicy, Vec<PpoSample>, Vec<f64>) {
    let (dim, n_actions) = (24, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phrases = (0..n_actions)
        .map(|_| {
            EmbeddingVector::new(
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                "test",
            )
            .unwrap()
        })
        .collect();
    let config = ActionPolicyConfig {
        hidden: 16,
        output_gain: 1.0,
        learn_grounding: true,
        grounding_init: 0.8,
        ..Default::default()
    };
    let policy = ActionPolicy::new(config, dim, n_actions, phrases, &mut rng).unwrap();
    let mut samples = Vec::new();
    let mut advantages = Vec::new();
    for i in 0..32 {
        let features: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grounding: Vec<f64> = (0..n_actions).map(|_| rng.random_range(-0.5..0.5)).collect();
        let d = policy.distribution(&features, &grounding).unwrap();
        let action = i % n_actions;
        let noise: f64 = rng.random_range(-0.5..0.5);
        samples.push(PpoSample {
            old_log_prob: d.log_probs[action] + noise,
            value: policy.value(&features),
            features,
            grounding,
            action,
            reward: rng.random_range(-1.0..1.0),
        });
        advantages.push(rng.random_range(-2.0..2.0));
    }
    (policy, samples, advantages)
}

/// Finite-difference check of the clipped PPO surrogate gradient over the
/// policy network and grounding scale. Also returns the clip fraction.
pub fn ppo_gradient_check(seed: u64) -> (Result<usize, (usize, f64, f64)>, f64) {
    let (policy, samples, adv) = small_ppo_problem(seed);
    let batch: Vec<&PpoSample> = samples.iter().collect();
    let (analytic, clip_fraction, _) = policy.surrogate_gradient(&batch, &adv);
    let x = policy.policy_vector();
    let f = |v: &[f64]| {
        let mut p = policy.clone();
        p.set_policy_vector(v);
        p.surrogate(&batch, &adv)
    };
    (check_gradient(f, &x, &analytic, 1e-6), clip_fraction)
}

/// Exhaustive toy problem: two prompts, one step, fixed per-prompt
/// returns. `J(phi) = sum_i pi_i(phi) R_i` is enumerated exactly.
pub struct EnumerationToy {
    pub policy: PromptPolicy,
    pub history: EmbeddingVector,
    pub returns: [f64; 2],
}

impl EnumerationToy {
    pub fn new() -> Self {
        let embedder = HashingEmbedder::new(16, 1).unwrap();
        let candidates = candidates_from(&embedder, &["go left now", "go right now"]);
        let config = PromptPolicyConfig {
            projection_dim: 4,
            init_scale: Some(0.5),
            center_history: false,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        EnumerationToy {
            policy: PromptPolicy::new(candidates, config, &mut rng).unwrap(),
            history: embedder.embed("standing in the middle").unwrap(),
            returns: [2.0, -1.0],
        }
    }

    pub fn objective_at(&self, params: &[f64]) -> f64 {
        let mut p = self.policy.clone();
        p.params_mut().data.copy_from_slice(params);
        self.objective_of(&p)
    }

    pub fn objective_of(&self, p: &PromptPolicy) -> f64 {
        let pi = p.distribution(&self.history).unwrap();
        pi.iter().zip(&self.returns).map(|(a, r)| a * r).sum()
    }

    /// Gradient of the enumerated objective by central differences.
    pub fn exact_gradient(&self) -> Vec<f64> {
        let x = self.policy.params().data.clone();
        (0..x.len())
            .map(|i| central_difference(|v| self.objective_at(v), &x, i, 1e-6))
            .collect()
    }

    /// Per-prompt score-function gradient `R_i grad log pi_i`.
    pub fn per_prompt_gradients(&self) -> Vec<Vec<f64>> {
        (0..2)
            .map(|i| {
                self.policy
                    .surrogate_gradient(&[WeightedChoice {
                        history: &self.history,
                        prompt_id: i,
                        weight: self.returns[i],
                    }])
                    .unwrap()
            })
            .collect()
    }
}

pub struct EnumerationCheck {
    pub samples: usize,
    pub max_abs_z: f64,
    /// Components with zero sampling variance must match exactly.
    pub max_degenerate_error: f64,
}

/// Monte-Carlo score-function gradient from `samples` draws of the policy
/// versus the exact gradient, as per-component z-scores.
pub fn enumeration_gradient_check(samples: usize, seed: u64) -> EnumerationCheck {
    let toy = EnumerationToy::new();
    let exact = toy.exact_gradient();
    let per = toy.per_prompt_gradients();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; 2];
    for _ in 0..samples {
        let d = toy.policy.sample_embedded(&toy.history, &mut rng).unwrap();
        counts[d.prompt_id] += 1;
    }
    let n = samples as f64;
    let (mut max_z, mut max_err) = (0.0f64, 0.0f64);
    for j in 0..exact.len() {
        let mean: f64 = (0..2).map(|i| counts[i] as f64 * per[i][j]).sum::<f64>() / n;
        let second: f64 = (0..2).map(|i| counts[i] as f64 * per[i][j].powi(2)).sum::<f64>() / n;
        let var = (second - mean * mean).max(0.0) * n / (n - 1.0);
        let se = (var / n).sqrt();
        let err = (mean - exact[j]).abs();
        if se > 1e-12 {
            max_z = max_z.max(err / se);
        } else {
            max_err = max_err.max(err);
        }
    }
    EnumerationCheck {
        samples,
        max_abs_z: max_z,
        max_degenerate_error: max_err,
    }
}

/// Exact policy-gradient ascent on the toy: weights `pi_i R_i` make the
/// surrogate gradient equal `grad J`. Returns J after each step.
pub fn enumeration_ascent(steps: usize, lr: f64) -> (Vec<f64>, f64) {
    let mut toy = EnumerationToy::new();
    let best = toy.returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut trace = vec![toy.objective_of(&toy.policy)];
    for _ in 0..steps {
        let pi = toy.policy.distribution(&toy.history).unwrap();
        let choices: Vec<WeightedChoice<'_>> = (0..2)
            .map(|i| WeightedChoice {
                history: &toy.history,
                prompt_id: i,
                weight: pi[i] * toy.returns[i],
            })
            .collect();
        let grad = toy.policy.surrogate_gradient(&choices).unwrap();
        toy.policy.ascend(&grad, lr).unwrap();
        trace.push(toy.objective_of(&toy.policy));
    }
    (trace, best)
}

/// Softmax computed directly from its definition.
pub fn naive_softmax(s: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = s.iter().map(|v| v.exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}


pub const N: usize = 0;
pub const E: usize = 1;
pub const S: usize = 2;
pub const W: usize = 3;

/// FourRoom from (7, 7) to the goal at (1, 1), bumping the east edge and a wall.
pub const FOURROOM_SCRIPT: [usize; 16] = [E, E, W, N, N, W, N, W, N, N, W, W, W, W, W, N];

/// Overcooked from (1, 2): a full tomato-lettuce salad, delivered.
#[rustfmt::skip]
pub const SALAD_SCRIPT: [usize; 38] = [
    W, N, E, N, N,             // fetch tomato, drop on cutboard0, chop
    S, W, S, S, W,             // walk down, fetch lettuce
    N, N, N, E, E, E, N, N,    // up to cutboard1, drop, chop
    N, E, S, E,                // pick chopped lettuce, plate it on plate0
    W, W, W, N, N,             // back for the chopped tomato
    S, E, E, E, E,             // plate it: salad complete
    E, S, S, W, W, S,          // pick the plate and deliver
];

pub fn golden_path(name: &str) -> PathBuf {
    core_dir().join("tests").join("golden").join(name)
}

/// Steps `env` through `actions`, returning rewards and the JSON-lines trace.
pub fn scripted_trace(env: &mut dyn Environment, actions: &[usize]) -> (Vec<f64>, String) {
    let mut w = TraceWriter::new(Vec::new());
    let mut rewards = Vec::new();
    for (t, &a) in actions.iter().enumerate() {
        let obs_text = env.render_text();
        let situation = env.situation();
        let out = env.step(Action(a)).unwrap();
        rewards.push(out.reward);
        w.write(&TraceRecord {
            t,
            state_digest: env.state_digest(),
            obs_text,
            action: a,
            reward: out.reward,
            done: out.done,
            situation,
        })
        .unwrap();
    }
    (rewards, String::from_utf8(w.into_inner()).unwrap())
}

/// True when `trace` equals the stored one; `BILEVEL_BLESS=1` rewrites it first.
pub fn matches_golden(name: &str, trace: &str) -> bool {
    let path = golden_path(name);
    if std::env::var("BILEVEL_BLESS").is_ok_and(|v| v == "1") {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, trace).unwrap();
    }
    std::fs::read_to_string(&path).is_ok_and(|g| g == trace)
}

pub fn assert_golden(name: &str, trace: &str) {
    assert!(matches_golden(name, trace), "golden trace {name} differs");
}

pub fn kitchen_at(agent: (usize, usize)) -> Overcooked {
    let mut env = Overcooked::new(OvercookedConfig::default()).unwrap();
    env.reset(0);
    let mut s = env.state().clone();
    s.agent = agent;
    env.set_state(s).unwrap();
    env
}

/// Reference UCB choice from raw counts and sums.
pub fn ucb_oracle(counts: &[u64], sums: &[f64], c: f64) -> usize {
    if let Some(a) = counts.iter().position(|&n| n == 0) {
        return a;
    }
    let total: u64 = counts.iter().sum();
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..counts.len() {
        let n = counts[a] as f64;
        let s = sums[a] / n + c * ((total as f64).ln() / n).sqrt();
        if s > best.1 {
            best = (a, s);
        }
    }
    best.0
}
