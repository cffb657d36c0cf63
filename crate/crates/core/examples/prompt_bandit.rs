//! Trains the prompt selector with policy gradient on a two-context bandit:
//! each history rewards the candidate that names its side of the chain.
//!
//! cargo run --release --example prompt_bandit

use std::path::PathBuf;

use bilevel_cot::embed::{EmbeddingProvider, HashingEmbedder};
use bilevel_cot::prompt::{CandidateFile, PromptPolicy, PromptPolicyConfig, PromptStep};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bilevel_cot::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/prompts/chainworld.json");
    let provider = HashingEmbedder::new(128, 2)?;
    let candidates = CandidateFile::load(&path)?.embed(&provider)?;
    let histories = [
        provider.embed("You stand at position 4. The reward waits on the left end.")?,
        provider.embed("You stand at position 4. The reward waits on the right end.")?,
    ];
    // candidate 0 heads left, candidate 1 goes right
    let wanted = [0, 1];
    let config = PromptPolicyConfig {
        projection_dim: 16,
        learning_rate: 0.02,
        warmup_episodes: 0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut policy = PromptPolicy::new(candidates, config, &mut rng)?;
    policy.observe_histories(&histories);
    for round in 0..=300 {
        let mut batch = Vec::new();
        for (h, want) in histories.iter().zip(wanted) {
            for _ in 0..8 {
                let d = policy.sample_embedded(h, &mut rng)?;
                batch.push(vec![PromptStep {
                    history: h.clone(),
                    prompt_id: d.prompt_id,
                    log_prob: d.log_prob,
                    reward: (d.prompt_id == want) as u8 as f64,
                }]);
            }
        }
        let stats = policy.pg_update(&batch, 0.9, policy.config().learning_rate)?;
        if round % 100 == 0 {
            let left = policy.distribution(&histories[0])?;
            let right = policy.distribution(&histories[1])?;
            println!(
                "round {round}: mean return {:.2}, p(left | left) {:.3}, p(right | right) {:.3}",
                stats.mean_return, left[0], right[1]
            );
        }
    }
    Ok(())
}
