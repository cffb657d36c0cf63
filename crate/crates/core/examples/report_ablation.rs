//! Trains the learned, random and UCB selectors briefly on ChainWorld, then
//! aggregates the three runs into learning curves and an AUC table.
//!
//! cargo run --release --example report_ablation -- runs/ablation 300

use std::path::PathBuf;

use bilevel_cot::harness::{self, cmd_report, cmd_train, Overrides};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "runs/ablation".into()));
    let episodes = args.next().unwrap_or_else(|| "300".into());
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/chainworld_full.json");
    let mut runs = Vec::new();
    for selector in ["learned", "random", "ucb"] {
        let overrides = Overrides {
            seeds: vec![0, 1, 2],
            selector: Some(selector.into()),
            set: vec![("episodes".into(), episodes.clone())],
            ..Default::default()
        };
        let dir = root.join(selector);
        cmd_train(&harness::load(&config, &overrides)?, &dir)?;
        runs.push(dir);
    }
    let out = cmd_report(&runs, &root.join("report"))?;
    print!("{}", std::fs::read_to_string(&out.auc)?);
    println!("curves in {}", out.curves.display());
    Ok(())
}
