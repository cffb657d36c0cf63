//! Embeds the shipped prompt candidates of one task with the local hashing
//! provider and prints their pairwise cosine similarities.
//!
//! cargo run --example embed_candidates -- overcooked

use std::path::PathBuf;

use bilevel_cot::embed::HashingEmbedder;
use bilevel_cot::prompt::CandidateFile;

fn main() -> bilevel_cot::Result<()> {
    let task = std::env::args().nth(1).unwrap_or_else(|| "chainworld".into());
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data/prompts")
        .join(format!("{task}.json"));
    let provider = HashingEmbedder::new(256, 2)?;
    let candidates = CandidateFile::load(&path)?.embed(&provider)?;
    for c in &candidates {
        println!("{}: {}", c.id, c.text);
    }
    for a in &candidates {
        let row: Vec<String> = candidates
            .iter()
            .map(|b| format!("{:.3}", a.embedding.dot(&b.embedding)))
            .collect();
        println!("{} | {}", a.id, row.join(" "));
    }
    Ok(())
}
