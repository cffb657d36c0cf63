mod common;

use bilevel_cot::embed::{EmbeddingProvider, HashingEmbedder};
use bilevel_cot::nn::softmax;
use bilevel_cot::prompt::{
    entropy_return_to_go, reward_to_go, PromptPolicy, PromptPolicyConfig, PromptStep, Similarity,
    UcbState, WeightedChoice,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{
    assert_close, candidates_from, enumeration_ascent, enumeration_gradient_check, naive_softmax,
    prompt_gradient_check, small_prompt_policy, ucb_oracle,
};

#[test]
fn softmax_matches_definition() {
    let s = [2.0, 1.0, 0.5];
    assert_close(&softmax(&s), &naive_softmax(&s), 1e-15);
    let p = softmax(&[2f64.ln(), 0.0, 0.0]);
    assert_close(&p, &[0.5, 0.25, 0.25], 1e-15);
}

#[test]
fn policy_distribution_is_softmax_of_scores() {
    let (policy, histories) = small_prompt_policy(Similarity::Dot, 3);
    for h in &histories {
        let s = policy.scores(h).unwrap();
        assert_close(&policy.distribution(h).unwrap(), &naive_softmax(&s), 1e-12);
    }
}

#[test]
fn sampling_frequencies_within_three_sigma() {
    let (policy, histories) = small_prompt_policy(Similarity::Dot, 5);
    let h = &histories[0];
    let p = policy.distribution(h).unwrap();
    let n = 100_000;
    let mut counts = vec![0usize; p.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..n {
        let d = policy.sample_embedded(h, &mut rng).unwrap();
        assert!((d.log_prob - p[d.prompt_id].ln()).abs() < 1e-9);
        counts[d.prompt_id] += 1;
    }
    for (c, q) in counts.iter().zip(&p) {
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        let freq = *c as f64 / n as f64;
        assert!((freq - q).abs() <= 3.0 * sigma, "freq {freq} vs p {q}");
    }
}

#[test]
fn temperature_divides_scores() {
    let (mut policy, histories) = small_prompt_policy(Similarity::Cosine, 1);
    let idx = policy.params().data.len() - 1;
    policy.params_mut().data[idx] = 0.0;
    let base = policy.scores(&histories[1]).unwrap();
    for s in &base {
        assert!(s.abs() <= 1.0 + 1e-12, "cosine score {s} exceeds 1");
    }
    policy.params_mut().data[idx] = 2f64.ln();
    let halved = policy.scores(&histories[1]).unwrap();
    let expect: Vec<f64> = base.iter().map(|s| s / 2.0).collect();
    assert_close(&halved, &expect, 1e-12);
}

#[test]
fn entropy_return_examples() {
    let r = entropy_return_to_go(&[1.0, 0.5], 0.5).unwrap();
    assert_close(&r, &[-1.25, -0.5], 1e-15);
    let r = entropy_return_to_go(&[2f64.ln()], 0.9).unwrap();
    assert_close(&r, &[-(2f64.ln())], 1e-15);
    assert!(reward_to_go(&[1.0], 1.0).is_err());
    assert!(reward_to_go(&[1.0], -0.1).is_err());
}

#[test]
fn dot_gradient_matches_finite_differences() {
    let checked = prompt_gradient_check(Similarity::Dot, 21).unwrap_or_else(|(i, g, n)| {
        panic!("component {i}: analytic {g} numeric {n}")
    });
    assert_eq!(checked, 2 * 16 * 64 + 1);
}

#[test]
fn cosine_gradient_matches_finite_differences() {
    prompt_gradient_check(Similarity::Cosine, 22)
        .unwrap_or_else(|(i, g, n)| panic!("component {i}: analytic {g} numeric {n}"));
}

#[test]
fn monte_carlo_gradient_agrees_with_enumeration() {
    let check = enumeration_gradient_check(100_000, 5);
    assert!(check.max_abs_z <= 3.0, "max |z| = {}", check.max_abs_z);
    assert!(check.max_degenerate_error < 1e-8);
}

#[test]
fn exact_ascent_climbs_to_the_best_prompt() {
    let (trace, best) = enumeration_ascent(3000, 0.05);
    for w in trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "objective fell from {} to {}", w[0], w[1]);
    }
    let last = *trace.last().unwrap();
    assert!(best - last < 1e-6, "stopped at {last}, optimum {best}");
}

fn toy_steps(policy: &PromptPolicy, rewards: &[f64]) -> Vec<PromptStep> {
    let embedder = HashingEmbedder::new(64, 2).unwrap();
    rewards
        .iter()
        .enumerate()
        .map(|(t, &r)| PromptStep {
            history: embedder.embed(&format!("position {t} of 10")).unwrap(),
            prompt_id: t % policy.len(),
            log_prob: 0.0,
            reward: r,
        })
        .collect()
}

#[test]
fn zero_learning_rate_is_identity() {
    let (mut policy, _) = small_prompt_policy(Similarity::Dot, 2);
    let before = policy.params().clone();
    let batch = vec![toy_steps(&policy, &[-1.0, -0.3, -0.9])];
    let stats = policy.pg_update(&batch, 0.95, 0.0).unwrap();
    assert!(stats.grad_norm > 0.0);
    assert_eq!(policy.params(), &before);
}

#[test]
fn constant_returns_cancel_against_the_baseline() {
    let (mut policy, _) = small_prompt_policy(Similarity::Dot, 2);
    // gamma 0 makes every reward-to-go equal its reward
    let batch = vec![toy_steps(&policy, &[-0.4; 3]), toy_steps(&policy, &[-0.4; 2])];
    let stats = policy.pg_update(&batch, 0.0, 0.01).unwrap();
    assert_eq!(stats.grad_norm, 0.0);
    assert_eq!(stats.baseline, -0.4);
}

#[test]
fn pg_update_uses_baselined_returns_to_go() {
    let (mut policy, _) = small_prompt_policy(Similarity::Dot, 4);
    let rewards = [[-1.0, -0.5, -0.2], [-0.1, -0.9, -0.6]];
    let gamma: f64 = 0.9;
    let batch: Vec<Vec<PromptStep>> = rewards.iter().map(|r| toy_steps(&policy, r)).collect();
    let rtg: Vec<Vec<f64>> = rewards
        .iter()
        .map(|r| {
            (0..3)
                .map(|t| (t..3).map(|i| gamma.powi((i - t) as i32) * r[i]).sum())
                .collect()
        })
        .collect();
    let b = rtg.iter().flatten().sum::<f64>() / 6.0;
    let choices: Vec<WeightedChoice<'_>> = batch
        .iter()
        .zip(&rtg)
        .flat_map(|(traj, g)| {
            traj.iter().zip(g).map(|(s, r)| WeightedChoice {
                history: &s.history,
                prompt_id: s.prompt_id,
                weight: (r - b) / 2.0,
            })
        })
        .collect();
    let expect = policy.surrogate_gradient(&choices).unwrap();
    let norm = expect.iter().map(|g| g * g).sum::<f64>().sqrt();
    let stats = policy.pg_update(&batch, gamma, 0.01).unwrap();
    assert!((stats.baseline - b).abs() < 1e-12);
    assert!((stats.grad_norm - norm).abs() < 1e-9 * norm.max(1.0));
}

#[test]
fn single_candidate_is_certain() {
    let embedder = HashingEmbedder::new(32, 2).unwrap();
    let cands = candidates_from(&embedder, &["only option"]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let policy = PromptPolicy::new(cands, PromptPolicyConfig::default(), &mut rng).unwrap();
    let h = embedder.embed("anything at all").unwrap();
    let d = policy.sample_embedded(&h, &mut rng).unwrap();
    assert_eq!((d.prompt_id, d.log_prob), (0, 0.0));
    let grad = policy
        .surrogate_gradient(&[WeightedChoice {
            history: &h,
            prompt_id: 0,
            weight: 3.0,
        }])
        .unwrap();
    assert!(grad.iter().all(|g| *g == 0.0));
}

#[test]
fn mismatched_history_is_rejected() {
    let (policy, _) = small_prompt_policy(Similarity::Dot, 0);
    let other = HashingEmbedder::new(32, 2).unwrap().embed("x").unwrap();
    assert!(policy.scores(&other).is_err());
}

#[test]
fn ucb_derived_example() {
    let mut ucb = UcbState::new(2, 1.0);
    for _ in 0..10 {
        ucb.update(0, -0.5);
    }
    ucb.update(1, -0.5);
    assert_eq!(ucb.counts(), &[10, 1]);
    let s0 = -0.5 + (11f64.ln() / 10.0).sqrt();
    let s1 = -0.5 + 11f64.ln().sqrt();
    assert!((ucb.score(0).unwrap() - s0).abs() < 1e-12);
    assert!((ucb.score(1).unwrap() - s1).abs() < 1e-12);
    assert_eq!(ucb.select(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_shift_invariant(
        s in prop::collection::vec(-20.0f64..20.0, 1..8),
        c in -50.0f64..50.0,
    ) {
        let p = softmax(&s);
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let argmax = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
        prop_assert_eq!(argmax(&p), argmax(&s));
    }

    #[test]
    fn entropy_return_is_nonpositive_and_monotone(
        h in prop::collection::vec(0.0f64..2.0, 1..12),
        gamma in 0.0f64..0.999,
        bump in 0.0f64..1.0,
        at in 0usize..12,
    ) {
        let base = entropy_return_to_go(&h, gamma).unwrap();
        prop_assert!(base.iter().all(|r| *r <= 0.0));
        let mut more = h.clone();
        let i = at % h.len();
        more[i] += bump;
        let after = entropy_return_to_go(&more, gamma).unwrap();
        for (t, (a, b)) in after.iter().zip(&base).enumerate() {
            prop_assert!(a <= b);
            if t > i {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn ucb_resets_and_tries_every_arm_in_order(
        k in 1usize..6,
        episodes in prop::collection::vec(prop::collection::vec(-2.0f64..0.0, 1..20), 1..5),
        c in 0.0f64..2.0,
    ) {
        let mut ucb = UcbState::new(k, c);
        for rewards in &episodes {
            ucb.begin_episode();
            prop_assert!(ucb.counts().iter().all(|&n| n == 0));
            let (mut counts, mut sums) = (vec![0u64; k], vec![0.0; k]);
            for (t, &r) in rewards.iter().enumerate() {
                let arm = ucb.select();
                if t < k {
                    prop_assert_eq!(arm, t);
                }
                prop_assert_eq!(arm, ucb_oracle(&counts, &sums, c));
                ucb.update(arm, r);
                counts[arm] += 1;
                sums[arm] += r;
            }
            prop_assert_eq!(ucb.counts(), &counts[..]);
        }
    }
}
