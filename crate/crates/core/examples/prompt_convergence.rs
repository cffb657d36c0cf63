//! Loads the final checkpoints of a ChainWorld train run and prints, for
//! every interior start position and rewarded side, the probability the
//! learned selector gives to each prompt candidate.
//!
//! cargo run --release --example prompt_convergence -- configs/chainworld_full.json runs/learned [final]

use std::path::PathBuf;

use bilevel_cot::env::{ChainState, ChainWorld, EnvConfig, Environment, RewardSide};
use bilevel_cot::harness::{self, Overrides};
use bilevel_cot::trainer::{checkpoint_path, Checkpoint, Resources, SeedRun};

fn main() -> bilevel_cot::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(
        args.next()
            .unwrap_or_else(|| "configs/chainworld_full.json".into()),
    );
    let run_dir = PathBuf::from(args.next().unwrap_or_else(|| "runs/learned".into()));
    let name = args.next().unwrap_or_else(|| "final".into());
    let resolved = harness::load(&config, &Overrides::default())?;
    let EnvConfig::Chainworld(cw) = resolved.config.env.clone() else {
        panic!("prompt_convergence expects a ChainWorld config");
    };
    let resources = Resources::from_config(&resolved.config, &resolved.secrets)?;
    for c in &resources.candidates {
        println!("candidate {}: {}", c.id, c.text);
    }
    let mentions = |text: &str, word: &str| {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .any(|w| w == word)
    };
    let mut consistent = Vec::new();
    for seed in harness::RunManifest::load(&run_dir)?.seeds {
        let ck = Checkpoint::load(&checkpoint_path(&run_dir, seed, &name))?;
        let run = SeedRun::from_checkpoint(&resolved.config, &resources, &ck)?;
        let mut env = ChainWorld::new(cw.clone())?;
        for side in [RewardSide::Left, RewardSide::Right] {
            let mut rows = Vec::new();
            for position in 1..cw.length - 1 {
                env.set_state(ChainState {
                    position,
                    rewarded: side,
                    steps: 0,
                    done: false,
                })?;
                let dist = run
                    .prompt_distribution(&[env.observation()])?
                    .unwrap_or_default();
                let word = match side {
                    RewardSide::Left => "left",
                    RewardSide::Right => "right",
                };
                let p: f64 = resources
                    .candidates
                    .iter()
                    .filter(|c| mentions(&c.text, word))
                    .map(|c| dist[c.id])
                    .sum();
                consistent.push(p);
                if position == cw.length / 2 {
                    let ent: Vec<String> = (0..resources.candidates.len())
                        .map(|id| {
                            run.action_distribution(&env.observation(), Some(id))
                                .map(|d| format!("{:.3}", d.entropy()))
                        })
                        .collect::<bilevel_cot::Result<_>>()?;
                    println!(
                        "seed {seed} {side:?} action entropy per candidate at {position}: {}",
                        ent.join(" ")
                    );
                }
                rows.push(
                    dist.iter()
                        .map(|p| format!("{p:.3}"))
                        .collect::<Vec<_>>()
                        .join(" "),
                );
            }
            println!("seed {seed} {side:?}: {}", rows.join(" | "));
        }
    }
    let mean = consistent.iter().sum::<f64>() / consistent.len().max(1) as f64;
    let min = consistent.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("situation-consistent probability: mean {mean:.3}, min {min:.3}");
    Ok(())
}
