//! Resolves chain-of-thought for a FourRoom start state under every shipped
//! prompt candidate, reading thoughts from the bundled cache.
//!
//! cargo run --example cot_lookup -- 3

use std::path::PathBuf;

use bilevel_cot::cot::{CotReasoner, ReasonerConfig};
use bilevel_cot::embed::HashingEmbedder;
use bilevel_cot::env::EnvConfig;
use bilevel_cot::prompt::CandidateFile;

fn main() -> bilevel_cot::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let candidates = CandidateFile::load(&data.join("prompts/fourroom.json"))?
        .embed(&HashingEmbedder::new(64, 2)?)?;
    let reasoner = CotReasoner::new(
        "fourroom",
        ReasonerConfig {
            cache_path: Some(data.join("cot/fourroom.jsonl")),
            ..Default::default()
        },
        None,
    )?;
    let mut env = EnvConfig::fourroom().build()?;
    let obs = env.reset(seed);
    println!("{}\n", obs.text);
    for c in &candidates {
        let thought = reasoner.reason(&obs, c)?;
        println!("[{}] {}\n  -> {}\n", c.id, c.text, thought.text);
    }
    Ok(())
}
