//! Fills a chain-of-thought cache from an OpenAI-compatible chat endpoint for
//! every ChainWorld situation and prompt candidate, then prints the cache.
//! Reads LLM_ENDPOINT and LLM_API_KEY; without an endpoint it falls back to
//! the deterministic template reasoner so the example still runs offline.
//!
//! LLM_ENDPOINT=http://localhost:8000/v1 cargo run --example remote_cot -- /tmp/cot.jsonl

use std::path::PathBuf;

use bilevel_cot::harness::{self, cmd_cache_cot, Overrides};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cache = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("chainworld_cot.jsonl").display().to_string());
    let backend = if std::env::var("LLM_ENDPOINT").is_ok() { "remote" } else { "template" };
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/chainworld_full.json");
    let overrides = Overrides {
        reasoner: Some(backend.into()),
        set: vec![("reasoner.cache_path".into(), serde_json::json!(cache).to_string())],
        ..Default::default()
    };
    let resolved = harness::load(&config, &overrides)?;
    let report = cmd_cache_cot(&resolved)?;
    println!("{backend}: {report:?}");
    print!("{}", std::fs::read_to_string(&cache)?);
    Ok(())
}
