//! Generates a corpus, writes it in the binary corpus format, reads it back
//! and confirms nothing changed.
//!
//! cargo run --example corpus_roundtrip -- [path]

use jointdiff::corpus::{generate, label_split, load, save, DomainSpec, Split};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("roundtrip.dfcx").display().to_string());
    let corpus = label_split(generate(&DomainSpec::default(), 7)?, 0.8, 7)?;
    save(&corpus, &path)?;
    let back = load(&path)?;
    let bytes = std::fs::metadata(&path)?.len();
    println!(
        "{} pairs ({} train / {} test), {} bytes at {path}",
        back.len(),
        back.subset(Split::Train).len(),
        back.subset(Split::Test).len(),
        bytes
    );
    let same = back.texts == corpus.texts && back.videos == corpus.videos && back.manifest.pairs == corpus.manifest.pairs;
    println!("identical after reload: {same}");
    Ok(())
}
