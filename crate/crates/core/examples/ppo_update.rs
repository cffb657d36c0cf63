//! Fits a small action policy with clipped PPO on a synthetic contextual task:
//! the rewarded action is the index of the largest of the first four features.
//!
//! cargo run --release --example ppo_update

use bilevel_cot::action::{ActionPolicy, ActionPolicyConfig, PpoSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn best(features: &[f64]) -> usize {
    (0..4).fold(0, |b, i| if features[i] > features[b] { i } else { b })
}

fn main() -> bilevel_cot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dim = 8;
    let mut policy = ActionPolicy::new(ActionPolicyConfig::default(), dim, 4, vec![], &mut rng)?;
    let grounding = vec![0.0; 4];
    for round in 0..=40 {
        let mut episodes = Vec::new();
        let mut hits = 0;
        for _ in 0..32 {
            let features: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = policy.act(&features, &grounding, &mut rng)?;
            let reward = if s.action == best(&features) { 1.0 } else { 0.0 };
            hits += reward as usize;
            episodes.push(vec![PpoSample {
                features,
                grounding: grounding.clone(),
                action: s.action,
                old_log_prob: s.log_prob,
                reward,
                value: s.value,
            }]);
        }
        let stats = policy.ppo_update(&episodes, &mut rng)?;
        if round % 10 == 0 {
            println!(
                "round {round}: accuracy {:.2}, clip fraction {:.2}, value loss {:.3}",
                hits as f64 / 32.0,
                stats.clip_fraction,
                stats.value_losses.last().copied().unwrap_or(0.0)
            );
        }
    }
    Ok(())
}
