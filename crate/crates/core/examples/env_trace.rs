//! Plays one uniformly random episode in a preset environment and prints the
//! JSON-lines trace: rendered text, situation, action and reward per step.
//!
//! cargo run --example env_trace -- fourroom 7

use bilevel_cot::env::{Action, EnvConfig, TraceRecord, TraceWriter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "chainworld-full".into());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut env = EnvConfig::preset(&preset)?.build()?;
    env.reset(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = TraceWriter::new(std::io::stdout().lock());
    let (mut t, mut total) = (0, 0.0);
    while !env.is_done() {
        let obs_text = env.render_text();
        let situation = env.situation();
        let action = rng.random_range(0..env.action_count());
        let step = env.step(Action(action))?;
        total += step.reward;
        out.write(&TraceRecord {
            t,
            state_digest: env.state_digest(),
            obs_text,
            action,
            reward: step.reward,
            done: step.done,
            situation,
        })?;
        t += 1;
    }
    eprintln!("{preset}: {t} steps, return {total}");
    Ok(())
}
