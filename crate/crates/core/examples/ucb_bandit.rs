//! Runs the per-episode UCB prompt selector against three arms with fixed
//! mean rewards and prints how often each arm is pulled.
//!
//! cargo run --example ucb_bandit

use bilevel_cot::prompt::UcbState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let means = [-0.9, -0.2, -0.6];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ucb = UcbState::new(means.len(), 1.0);
    for episode in 0..3 {
        // statistics restart with every episode
        ucb.begin_episode();
        let mut first = Vec::new();
        for t in 0..60 {
            let arm = ucb.select();
            if t < 5 {
                first.push(arm);
            }
            let noise: f64 = rng.random_range(-0.1..0.1);
            ucb.update(arm, means[arm] + noise);
        }
        println!(
            "episode {episode}: first pulls {first:?}, counts {:?}",
            ucb.counts()
        );
    }
}
