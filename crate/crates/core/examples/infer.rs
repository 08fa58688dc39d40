//! Saves a trained matcher as a checkpoint, reloads it and judges single
//! recordings against a target word, with and without gating.

use namegate::checkpoint;
use namegate::commands::infer_report;
use namegate::corpus::Corpus;
use namegate::dataio::loso_folds;
use namegate::model::Objective;
use namegate::prompts::FileBackedProvider;
use namegate::synthdata::{generate, SynthSpec};
use namegate::training::{train_one, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let g = generate(&SynthSpec::default(), dir.path().join("data"))?;
    let corpus = Corpus::from_manifest(&g.manifest, false)?;
    let provider = FileBackedProvider::load(&g.prompt_manifest)?;
    let folds = loso_folds(corpus.dataset(), 0)?;
    let out = train_one(
        &TrainConfig::for_objective(Objective::Matcher, 0),
        &folds[0],
        &corpus,
        Some(&provider),
        0,
    )?;

    let ckpt = dir.path().join("ckpt");
    checkpoint::save(&out.model, &ckpt)?;
    let model = checkpoint::load(&ckpt)?;

    let ds = corpus.dataset();
    let words = &ds.vocabulary;
    for &i in corpus.split(&folds[0]).test.iter().take(3) {
        let e = corpus.entry(i);
        let frames = ds.load_frames(i)?;
        let other = words
            .iter()
            .find(|w| **w != e.target_word)
            .expect("two words");
        for (target, gate) in [(&e.target_word, true), (other, true), (other, false)] {
            let (json, named) = infer_report(&model, &frames, target, gate)?;
            println!(
                "{} target {:<10} gate {:<5} -> {} ({})",
                e.recording_id,
                target,
                gate,
                json["predicted"],
                if named { "named" } else { "not named" }
            );
        }
    }
    Ok(())
}
