//! Writes a small synthetic corpus and reports what landed on disk.
//!
//! `cargo run --example gen_synth -- [out_dir]`

use namegate::dataio::{load_dataset, read_header};
use namegate::synthdata::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| tmp.path().to_path_buf());
    let spec = SynthSpec {
        n_speakers: 4,
        n_words: 6,
        repeats: 3,
        ..SynthSpec::default()
    };
    let g = generate(&spec, &out)?;
    let ds = load_dataset(&g.manifest)?;
    println!("manifest  {}", g.manifest.display());
    println!("prompts   {}", g.prompt_manifest.display());
    println!("speakers  {:?}", ds.speakers);
    println!("words     {:?}", ds.vocabulary);
    println!("correct   {}/{}", g.truth.correct_count, g.truth.total);
    let first = &ds.entries[0];
    let h = read_header(ds.embedding_path(first))?;
    println!("{}: {:?}", first.recording_id, h);
    Ok(())
}
