//! Regenerates `fixtures/fixture_200.json`.

use std::path::Path;

use narrative_seq::fixture::{corpus_to_json, fixture_corpus, FIXTURE_FILE};

fn main() -> std::io::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(FIXTURE_FILE);
    std::fs::write(&path, corpus_to_json(&fixture_corpus()))?;
    println!("wrote {}", path.display());
    Ok(())
}
