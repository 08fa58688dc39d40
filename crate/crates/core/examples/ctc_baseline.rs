//! The character-level CTC baseline: trains on correct attempts only,
//! then transcribes held-out recordings and decides against the target.

use namegate::corpus::Corpus;
use namegate::dataio::loso_folds;
use namegate::model::{Model, Objective};
use namegate::synthdata::{generate, SynthSpec};
use namegate::training::{train_one, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SynthSpec {
        n_speakers: 4,
        n_words: 6,
        repeats: 3,
        ..SynthSpec::default()
    };
    let g = generate(&spec, dir.path())?;
    let corpus = Corpus::from_manifest(&g.manifest, true)?;
    let folds = loso_folds(corpus.dataset(), 0)?;
    let config = TrainConfig::for_objective(Objective::Ctc, 0);
    let out = train_one(&config, &folds[0], &corpus, None, 0)?;
    let r = &out.report;
    println!(
        "{} training recordings, {} infeasible skipped",
        r.train_recordings.len(),
        r.infeasible_skipped
    );
    let first = r.epoch_losses.first().copied().unwrap_or(f64::NAN);
    let last = r.epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "loss {first:.3} -> {last:.3}, best val WER {:.3}",
        r.best_metric
    );

    let Model::Ctc(m) = &out.model else {
        unreachable!()
    };
    for &i in corpus.split(&folds[0]).test.iter().take(8) {
        let e = corpus.entry(i);
        let (text, label) = m.decide(corpus.frames(i)?, &e.target_word)?;
        println!("{:<12} heard {:<12?} -> {}", e.target_word, text, label);
    }
    Ok(())
}
