//! Trains the learned prompt selector on fully observed ChainWorld for a short
//! budget and prints the run summary written to the output directory.
//!
//! cargo run --release --example train_chainworld -- runs/example 400

use std::path::PathBuf;

use bilevel_cot::harness::{self, cmd_train, Overrides};

fn main() -> bilevel_cot::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/example".into()));
    let episodes = args.next().unwrap_or_else(|| "400".into());
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/chainworld_full.json");
    let overrides = Overrides {
        seeds: vec![0, 1],
        set: vec![("episodes".into(), episodes)],
        ..Default::default()
    };
    let resolved = harness::load(&config, &overrides)?;
    let outcome = cmd_train(&resolved, &out)?;
    let r = &outcome.report;
    println!("AUC {:.4} ± {:.4}", r.auc_mean, r.auc_stderr);
    for s in &r.seeds {
        println!(
            "seed {}: final reward {:.3}, entropy {:.3} -> {:.3}",
            s.seed, s.final_norm_reward, s.initial_entropy, s.final_entropy
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
